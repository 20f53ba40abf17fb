import json
from pathlib import Path

import numpy as np
import pytest
import scipy.io
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from phmor.bench import cli
from phmor.bench.config import ExperimentConfig, make_input
from phmor.bench.experiment import certify_prop1_cmd, git_blob_sha1, run_experiment
from phmor.bench.mmio import (load_matrices, read_matrix_market, write_matrices,
                              write_matrix_market)
from phmor.bench.models import generate_msd_chain
from phmor.errors import (ConfigError, DenseLimitExceeded, InvalidParameter, ParseError,
                          PreconditionUnmet, RankDeficient, StageError)
from phmor.integrators import TimeGrid, solve_expm_oracle
from phmor.phcore import PHSystem, ZeroInput, energy_norms, hamiltonian, validate_ph_structure

ROOT = Path(__file__).resolve().parents[1]
SMALL = {"model": {"type": "msd_chain", "n_masses": 20, "mass": 1.0, "stiffness": 1e4, "damping": 200.0},
         "grid": {"t0": 0.0, "T": 5.0, "n_steps": 200}, "n": 4, "n_A": 8, "n_H": 8}


class TestChain:
    def test_harmonic_oscillator(self):
        s = generate_msd_chain(1, 1.0, 1.0, 0.0, x0=[1.0, 0.0])
        np.testing.assert_array_equal(s.J, [[0, 1], [-1, 0]])
        np.testing.assert_array_equal(s.H, np.eye(2))
        tr = solve_expm_oracle(s, ZeroInput(1), TimeGrid(0, 10, 100))
        h = 0.5 * energy_norms(s, tr.states) ** 2
        assert np.max(np.abs(h - 0.5)) <= 1e-13

    def test_damped_oscillator(self):
        s = generate_msd_chain(1, 1.0, 1.0, 0.5, x0=[1.0, 0.0])
        L = s.L
        # the position block is undamped, so the top eigenvalue is 0, never positive
        assert np.linalg.eigvalsh(-L.T @ s.D @ L)[-1] <= 1e-15
        tr = solve_expm_oracle(s, ZeroInput(1), TimeGrid(0, 40, 400))
        h = 0.5 * energy_norms(s, tr.states) ** 2
        assert np.all(np.diff(h) <= 1e-15) and h[-1] < 1e-3 * h[0]

    def test_default_size(self):
        s = generate_msd_chain(100, 1.0, 1e4, 200.0)
        assert s.N == 200 and s.m == 1 and s.h_factor is not None
        assert validate_ph_structure(s).passed
        assert s.B[100, 0] == 1.0 and s.B.sum() == 1.0

    @pytest.mark.parametrize("args", [(0, 1, 1, 0), (2, 0, 1, 0), (2, 1, -1, 0), (2, 1, 1, -0.1),
                                      (2.5, 1, 1, 0), (2, np.nan, 1, 0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameter):
            generate_msd_chain(*args)


def _w(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestMatrixMarket:
    def test_symmetric_and_skew_fixture(self, tmp_path):
        _w(tmp_path, "H.mtx", "%%MatrixMarket matrix coordinate real symmetric\n% energy\n2 2 3\n1 1 2.0\n2 1 0.5\n2 2 1.0\n")
        _w(tmp_path, "J.mtx", "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 -1.0\n")
        _w(tmp_path, "D.mtx", "%%MatrixMarket matrix coordinate real general\n2 2 1\n2 2 0.1\n")
        _w(tmp_path, "B.mtx", "%%MatrixMarket matrix array real general\n2 1\n0\n1\n")
        s = load_matrices({r: tmp_path / f"{r}.mtx" for r in "JDHB"})
        np.testing.assert_array_equal(s.H, [[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_array_equal(s.J, [[0.0, 1.0], [-1.0, 0.0]])
        assert validate_ph_structure(s).passed

    def test_out_of_range_line_number(self, tmp_path):
        p = _w(tmp_path, "bad.mtx", "%%MatrixMarket matrix coordinate real general\n% c\n2 2 2\n1 1 1.0\n3 1 1.0\n")
        with pytest.raises(ParseError) as ei:
            read_matrix_market(p)
        assert ei.value.line == 5 and "out of range" in ei.value.reason

    @pytest.mark.parametrize("text,line", [
        ("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1\n", 1),
        ("%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n", 1),
        ("%%MatrixMarket matrix coordinate real general\n1 1\n", 2),
        ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3),
        ("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n", 3),
        ("%%MatrixMarket matrix array real general\n2 1\n1.0\n2.0\n3.0\n", 5),
    ])
    def test_malformed(self, tmp_path, text, line):
        with pytest.raises(ParseError) as ei:
            read_matrix_market(_w(tmp_path, "m.mtx", text))
        assert ei.value.line == line

    @pytest.mark.parametrize("sym,fmt", [("general", "coordinate"), ("symmetric", "coordinate"),
                                         ("skew-symmetric", "coordinate"), ("general", "array"),
                                         ("symmetric", "array"), ("skew-symmetric", "array")])
    def test_against_scipy(self, tmp_path, rng, sym, fmt):
        A = rng.standard_normal((5, 5))
        A[rng.uniform(size=A.shape) < 0.4] = 0.0
        A = {"general": A, "symmetric": A + A.T, "skew-symmetric": A - A.T}[sym]
        p = tmp_path / "a.mtx"
        write_matrix_market(p, A, sym, fmt)
        ref = scipy.io.mmread(str(p))
        ref = ref.toarray() if hasattr(ref, "toarray") else np.asarray(ref)
        np.testing.assert_array_equal(read_matrix_market(p), ref)
        np.testing.assert_array_equal(read_matrix_market(p), A)

    def test_integer_field(self, tmp_path):
        p = _w(tmp_path, "i.mtx", "%%MatrixMarket matrix coordinate integer general\n2 3 2\n1 3 7\n2 1 -2\n")
        np.testing.assert_array_equal(read_matrix_market(p), scipy.io.mmread(str(p)).toarray())

    def test_dense_limit(self, tmp_path, monkeypatch):
        p = tmp_path / "a.mtx"
        write_matrix_market(p, np.eye(6))
        monkeypatch.setenv("PHMOR_DENSE_LIMIT", "5")
        with pytest.raises(DenseLimitExceeded):
            read_matrix_market(p)
        monkeypatch.setenv("PHMOR_DENSE_LIMIT", "6")
        assert read_matrix_market(p).shape == (6, 6)

    def test_round_trip_model(self, tmp_path, rng):
        s = generate_msd_chain(7, 1.3, 2.7, 0.3, x0=rng.standard_normal(14))
        write_matrices(s, tmp_path)
        back = load_matrices(tmp_path)
        for r in ("J", "D", "H", "B", "x0"):
            np.testing.assert_allclose(getattr(back, r), getattr(s, r), rtol=1e-15, atol=0)
        assert json.loads((tmp_path / "manifest.json").read_text())["roles"]["H"] == "H.mtx"

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(-1e300, 1e300, allow_subnormal=True)))
    def test_round_trip_values(self, A):
        import tempfile
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "a.mtx"
            write_matrix_market(p, A)
            np.testing.assert_array_equal(read_matrix_market(p), A)

    def test_descriptor_roles(self, tmp_path):
        E, Q = 2 * np.eye(2), np.eye(2)
        for name, M, sym in (("E", E, "symmetric"), ("Q", Q, "symmetric"),
                             ("J", np.array([[0, 1.0], [-1.0, 0]]), "skew-symmetric"),
                             ("D", np.zeros((2, 2)), "general"), ("B", np.array([[0.0], [1.0]]), "general"),
                             ("x0_tilde", np.array([[1.0], [2.0]]), "general")):
            write_matrix_market(tmp_path / f"{name}.mtx", M, sym, "array")
        (tmp_path / "manifest.json").write_text(json.dumps(
            {"roles": {r: f"{r}.mtx" for r in ("E", "Q", "J", "D", "B", "x0_tilde")}}))
        s = load_matrices(tmp_path / "manifest.json")
        np.testing.assert_allclose(s.H, 0.5 * np.eye(2))
        np.testing.assert_allclose(s.x0, [2.0, 4.0])

    def test_missing_role(self, tmp_path):
        write_matrix_market(tmp_path / "J.mtx", np.zeros((2, 2)))
        with pytest.raises(ParseError):
            load_matrices({"J": tmp_path / "J.mtx"})


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert (c.n, c.n_A, c.n_H) == (10, 20, 20)
        assert c.bounds == ["standard", "alp", "hierarchical"]
        assert c.model["n_masses"] == 100 and c.grid["n_steps"] == 1000

    def test_shipped_configs_parse(self):
        for p in (ROOT / "configs").glob("*.json"):
            ExperimentConfig.from_file(p)

    @pytest.mark.parametrize("bad", [{"n": 0}, {"n_H": 5, "n": 10}, {"bounds": ["fancy"]},
                                     {"fom_solver": "rk4"}, {"colour": 1}, {"n_A": "many"},
                                     {"grid": {"T": 0.0, "n_steps": 10}}, {"prop1": {"x0": "huge"}},
                                     {"test_input": {"type": "chirp"}}, {"tolerances": {"foo": 1}}])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{\n  \"n\": 3,,\n}")
        with pytest.raises(ConfigError, match="line 2"):
            ExperimentConfig.from_file(p)

    def test_make_input(self):
        assert make_input({"type": "zero"}).sample([0.0]).shape == (1, 1)
        u = make_input({"type": "tabulated", "times": [0, 1], "values": [0, 2]})
        assert u(0.5)[0] == pytest.approx(1.0)


class TestExperiment:
    def test_small_run(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL)
        art = run_experiment(cfg, tmp_path)
        assert set(art.files) == {"bounds.csv", "effectivity.csv", "components.csv", "summary.csv"}
        man = json.loads((tmp_path / "manifest.json").read_text())
        for name, meta in man["files"].items():
            data = (tmp_path / name).read_bytes()
            assert meta["sha1"] == git_blob_sha1(data)
            header = data.decode().splitlines()[0].split(",")
            assert set(header) == set(meta["columns"])
        assert man["rigor"]["passed"] and set(man["stage_seconds"]) >= {"model", "train", "basisgen", "test", "bounds", "emit"}
        assert man["tolerances"]["rigor_slack"] == 1e-6 and man["resolved"]["scheme"] == "exponential"
        for name, s in art.summary.items():
            assert s["min_effectivity"] >= 1 - 1e-6

    def test_deterministic(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL)
        a = run_experiment(cfg, tmp_path / "a")
        b = run_experiment(cfg, tmp_path / "b")
        for name in a.files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_component_rows_sum(self, tmp_path):
        art = run_experiment(ExperimentConfig.from_dict(SMALL), tmp_path)
        s = art.series
        np.testing.assert_array_equal(s["alp"].values,
                                      s["approx_error_norm"].values + s["alp_residual_integral"].values)

    def test_rank_deficient_stage(self, tmp_path):
        cfg = ExperimentConfig.from_dict({**SMALL, "grid": {"T": 1.0, "n_steps": 5}, "n_A": 7})
        with pytest.raises(StageError) as ei:
            run_experiment(cfg, tmp_path)
        assert ei.value.stage == "basisgen" and isinstance(ei.value.cause, RankDeficient)

    def test_midpoint_fom(self, tmp_path):
        cfg = ExperimentConfig.from_dict({**SMALL, "fom_solver": "midpoint"})
        art = run_experiment(cfg, tmp_path)
        assert art.manifest["resolved"]["scheme"] == "midpoint"
        assert all(s["min_effectivity"] >= 1 - 1e-6 for s in art.summary.values())

    def test_x0_outside_span(self, tmp_path, rng):
        s = generate_msd_chain(20, 1.0, 1e4, 200.0, x0=rng.standard_normal(40))
        write_matrices(s, tmp_path / "model")
        cfg = ExperimentConfig.from_dict({**SMALL, "model": {"type": "file", "path": str(tmp_path / "model")}})
        with pytest.raises(StageError, match="InitialStateNotInSpan"):
            run_experiment(cfg, tmp_path / "out")

    def test_prop1_cmd(self, tmp_path, capsys):
        code, reps = certify_prop1_cmd(ExperimentConfig.from_dict(SMALL), tmp_path)
        assert code == 0 and set(reps) == {"pod_extension", "error_augmented", "random_complement"}
        assert all(r.status == "certified" for r in reps.values())
        assert "status=certified" in capsys.readouterr().out
        assert (tmp_path / "prop1.csv").exists()


class TestCLI:
    def _cfg(self, tmp_path, **extra):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({**SMALL, **extra}))
        return str(p)

    def test_run(self, tmp_path, capsys):
        assert cli.main(["run", "--config", self._cfg(tmp_path), "--out", str(tmp_path / "o"),
                         "--bounds", "standard,hier"]) == 0
        assert "hierarchical" in capsys.readouterr().out
        man = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert man["config"]["bounds"] == ["standard", "hierarchical"]

    def test_config_error(self, tmp_path):
        assert cli.main(["run", "--config", self._cfg(tmp_path, n=0)]) == 2
        assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 4

    def test_prop1(self, tmp_path):
        cfg = self._cfg(tmp_path)
        assert cli.main(["prop1", "--config", cfg]) == 0
        assert cli.main(["prop1", "--config", cfg, "--prop1-tol", "1e-30"]) == 3
        with pytest.warns(PreconditionUnmet):
            assert cli.main(["prop1", "--config", cfg, "--negative-control"]) == 0

    def test_rigor_recheck_exit(self, tmp_path):
        # demanding effectivity >= 2 everywhere must trip the emission check
        cfg = self._cfg(tmp_path, tolerances={"rigor_slack": -1.0})
        assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
        man = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert man["rigor"]["passed"] is False

    def test_gen_validate(self, tmp_path, capsys):
        assert cli.main(["gen", "--n-masses", "5", "--out", str(tmp_path / "m")]) == 0
        assert cli.main(["validate", str(tmp_path / "m")]) == 0
        assert "H_spd" in capsys.readouterr().out
        D = tmp_path / "m" / "D.mtx"
        write_matrix_market(D, -np.eye(10))
        assert cli.main(["validate", str(tmp_path / "m")]) == 3
        D.write_text("%%MatrixMarket matrix coordinate real general\n10 10 1\n11 1 1.0\n")
        assert cli.main(["validate", str(tmp_path / "m")]) == 4

    def test_external_model_without_matrices(self, tmp_path):
        cfg = json.loads((ROOT / "configs" / "external_model.json").read_text())
        cfg["model"]["path"] = str(tmp_path / "absent")
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 4
