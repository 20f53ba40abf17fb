"""Train/test experiment pipeline and CSV emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .. import __version__
from ..basisgen import (SnapshotSet, alp_basis_from_errors, extend_hierarchical,
                        pod_state, solve_fom)
from ..bounds import (alp_bound, certify_prop1, effectivity, hierarchical_bound, log_norm_constant,
                      primal_residual_norms, standard_bound, true_error_series)
from ..errors import ConfigError, InitialStateNotInSpan, PHMORError, RigorViolation, StageError
from ..integrators import GAUSS_NODES, TimeGrid, solve
from ..phcore import PHSystem, energy_norms
from ..projection import reduce, reduced_error_system
from .config import ExperimentConfig, make_input
from .mmio import dense_limit, load_matrices
from .models import generate_msd_chain

__all__ = ["RunArtifacts", "build_model", "run_experiment", "certify_prop1_cmd",
           "secondary_basis", "git_blob_sha1"]

RANK_CUTOFF = 1e-10

COLUMN_DOCS = {
    "bounds.csv": {
        "time": "grid time t_k",
        "series": "true_error, standard, alp or hierarchical",
        "value": "energy-norm error or error bound at t_k",
    },
    "effectivity.csv": {
        "time": "grid time t_k (points with true error below the floor are omitted)",
        "series": "bound kind",
        "value": "bound / true error",
    },
    "components.csv": {
        "time": "grid time t_k",
        "series": "approx_error_norm, alp_residual_integral, state_difference_norm or "
                  "hier_residual_integral",
        "value": "component value; the two components of a bound sum to it",
    },
    "summary.csv": {
        "bound": "bound kind",
        "max_effectivity": "largest effectivity over retained points",
        "min_effectivity": "smallest effectivity over retained points",
        "final_bound": "bound value at T",
        "final_true_error": "true error at T",
        "n_retained": "number of grid points used",
        "n_skipped": "points below the effectivity floor",
    },
    "prop1.csv": {
        "time": "grid time t_k",
        "source": "secondary-basis source",
        "alp": "ALP bound",
        "hierarchical": "hierarchical bound",
        "abs_diff": "|alp - hierarchical|",
    },
}


@dataclass
class RunArtifacts:
    """Files written by a run, the manifest and the effectivity summary."""

    out_dir: Path
    files: dict
    manifest: dict
    summary: dict
    series: dict = field(default_factory=dict, repr=False)


def git_blob_sha1(data: bytes) -> str:
    """Content hash in the form git uses for blobs."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class _Stages:
    def __init__(self):
        self.times = {}

    @contextmanager
    def __call__(self, name):
        t = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except (PHMORError, ValueError, OSError, np.linalg.LinAlgError) as exc:
            raise StageError(name, exc) from exc
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t


def build_model(cfg: ExperimentConfig) -> PHSystem:
    m = dict(cfg.model)
    kind = m.pop("type")
    if kind == "msd_chain":
        try:
            return generate_msd_chain(**m)
        except TypeError as exc:
            raise ConfigError(f"invalid msd_chain parameters: {exc}") from None
    return load_matrices(m["path"], m.get("dense_limit"), x0_convention=m.get("x0_convention", "transform"))


def _grid(cfg) -> TimeGrid:
    g = cfg.grid
    return TimeGrid(float(g.get("t0", 0.0)), float(g["T"]), int(g["n_steps"]))


def _schemes(cfg, sys):
    fom = cfg.fom_solver
    if fom == "auto":
        fom = "oracle" if sys.N <= cfg.tolerances.oracle_limit else "midpoint"
    scheme = cfg.scheme
    if scheme == "auto":
        scheme = "exponential" if fom == "oracle" else "midpoint"
    return fom, scheme


def _numerical_rank(snaps: SnapshotSet, sys: PHSystem) -> int:
    s = np.linalg.svd(sys.L.T @ snaps.data, compute_uv=False)
    return int(np.sum(s > RANK_CUTOFF * s[0])) if s.size and s[0] > 0 else 0


def _check_sizes(cfg, N):
    for key in ("n", "n_H") + (("n_A",) if cfg.n_A != "rank" else ()):
        if getattr(cfg, key) > N:
            raise ConfigError(f"{key}={getattr(cfg, key)} exceeds N={N}")


def _long_csv(rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in r])
    return buf.getvalue().encode()


def _series_rows(grid, named):
    yield ("time", "series", "value")
    t = grid.times
    for name, vals in named.items():
        for k in range(len(t)):
            if np.isfinite(vals[k]):
                yield (float(t[k]), name, float(vals[k]))


def _write(out: Path, files: dict, name: str, data: bytes):
    (out / name).write_bytes(data)
    files[name] = {"sha1": git_blob_sha1(data), "bytes": len(data), "columns": COLUMN_DOCS[name]}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunArtifacts:
    """Run the train/test protocol and write CSVs plus ``manifest.json``.

    Stages: ``model`` (build or load, check structure), ``train`` (training
    FOM solve), ``basisgen`` (POD, hierarchical extension, ALP basis from error
    snapshots), ``test`` (truth and reduced solves for the test input),
    ``bounds`` and ``emit``. Failures are raised as
    :class:`~phmor.errors.StageError` naming the stage.
    """
    stage = _Stages()
    out = Path(out_dir or cfg.out)
    tol = cfg.tolerances
    with stage("model"):
        sys = build_model(cfg)
        _check_sizes(cfg, sys.N)
        grid = _grid(cfg)
        u_train = make_input(cfg.train_input, sys.m)
        u_test = make_input(cfg.test_input, sys.m)
        fom_solver, scheme = _schemes(cfg, sys)
    with stage("train"):
        train = solve_fom(sys, u_train, grid, fom_solver, tol.oracle_limit)
        snaps = SnapshotSet.from_trajectory(train)
    with stage("basisgen"):
        V = pod_state(snaps, sys, cfg.n)
        rom = reduce(sys, V)
        x0n = float(energy_norms(sys, sys.x0)[0])
        off = float(energy_norms(sys, rom.projector().apply(sys.x0))[0])
        if off > 1e-10 * max(x0n, 1e-300) and x0n > 0:
            raise InitialStateNotInSpan(f"x0 has H-norm {off:.3e} outside span(V); "
                                        "bounds assume x0 in span(V)")
        hier = alp = None
        if "hierarchical" in cfg.bounds:
            hier = reduce(sys, extend_hierarchical(V, snaps, sys, cfg.n_H))
    with stage("test"):
        truth_traj = solve_fom(sys, u_test, grid, fom_solver, tol.oracle_limit,
                               with_midpoints=scheme == "exponential")
        rom_traj = solve(rom.lti(), u_test, grid, scheme)
        truth = true_error_series(sys, rom, u_test, grid, fom_solver, scheme, rom_traj, truth_traj)
    with stage("basisgen"):
        n_A = None
        if "alp" in cfg.bounds:
            if cfg.alp_snapshots == "test":
                err = truth_traj.states - rom_traj.states @ rom.V.T
                if truth_traj.midpoints is not None and rom_traj.midpoints is not None:
                    # the bound integrals also sample interval midpoints
                    err = np.vstack([err, truth_traj.midpoints - rom_traj.midpoints @ rom.V.T])
            else:
                err = train.states - solve(rom.lti(), u_train, grid, scheme).states @ rom.V.T
            esnaps = SnapshotSet(err.T, "error", grid)
            n_A = _numerical_rank(esnaps, sys) if cfg.n_A == "rank" else cfg.n_A
            alp = reduced_error_system(sys, alp_basis_from_errors(esnaps, sys, n_A))
    with stage("bounds"):
        series, comps = {}, {}
        if "standard" in cfg.bounds:
            res = primal_residual_norms(sys, rom, rom_traj, u_test)
            mu = log_norm_constant(sys, "sharp").decay_rate if cfg.kernel == "decay" else 0.0
            series["standard"] = standard_bound(res, cfg.kernel, mu)
        if alp is not None:
            series["alp"], c = alp_bound(sys, rom, alp, u_test, grid, scheme)
            comps.update(c)
        if hier is not None:
            series["hierarchical"], c = hierarchical_bound(sys, rom, hier, u_test, grid, scheme, rom_traj)
            comps.update(c)
        floor = tol.floor_factor * float(np.max(energy_norms(sys, truth_traj.states)))
        effs, summary = {}, {}
        for name, b in series.items():
            s, mx = effectivity(b, truth, floor)
            effs[name] = s
            kept = s.values[s.retained]
            summary[name] = {
                "max_effectivity": mx,
                "min_effectivity": float(kept.min()),
                "final_bound": float(b.values[-1]),
                "final_true_error": float(truth.values[-1]),
                "n_retained": int(s.retained.sum()),
                "n_skipped": int((~s.retained).sum()),
            }
    with stage("emit"):
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        named = {"true_error": truth.values}
        named.update({k: v.values for k, v in series.items()})
        _write(out, files, "bounds.csv", _long_csv(_series_rows(grid, named)))
        _write(out, files, "effectivity.csv",
               _long_csv(_series_rows(grid, {k: v.values for k, v in effs.items()})))
        _write(out, files, "components.csv",
               _long_csv(_series_rows(grid, {k: v.values for k, v in comps.items()})))
        cols = list(COLUMN_DOCS["summary.csv"])
        rows = [cols] + [[name] + [summary[name][c] for c in cols[1:]] for name in summary]
        _write(out, files, "summary.csv", _long_csv(rows))
        worst = {k: v["min_effectivity"] for k, v in summary.items()}
        rigor_ok = all(w >= 1.0 - tol.rigor_slack for w in worst.values())
    manifest = {
        "package": "phmor",
        "version": __version__,
        "config": cfg.to_dict(),
        "resolved": {
            "N": sys.N, "m": sys.m, "n": cfg.n, "n_A": n_A, "n_H": cfg.n_H if hier else None,
            "fom_solver": fom_solver, "scheme": scheme, "dt": grid.dt,
            "quadrature": "simpson" if scheme == "exponential" else "midpoint",
            "gauss_nodes": GAUSS_NODES, "exp_constant": 1.0, "kernel": cfg.kernel,
            "effectivity_floor": floor, "dense_limit": dense_limit(),
            "rank_cutoff": RANK_CUTOFF,
        },
        "tolerances": vars(tol).copy(),
        "rigor": {"passed": rigor_ok, "min_effectivity": worst, "slack": tol.rigor_slack},
        "files": files,
        "stage_seconds": dict(stage.times),
    }
    with stage("manifest"):
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if not rigor_ok:
        raise StageError("emit", RigorViolation(f"effectivity below 1 - {tol.rigor_slack:g}: {worst}"))
    return RunArtifacts(out, {k: out / k for k in files}, manifest, summary,
                        {"true_error": truth, **series, **comps})


# Equality certification ======================================================
def _h_orthonormal_complement(W, V, sys, k):
    """``k`` H-orthonormal directions from ``span(W)`` that are H-orthogonal to ``V``."""
    L = sys.L
    Q = L.T @ V
    Y = L.T @ W
    for _ in range(2):
        Y = Y - Q @ np.linalg.lstsq(Q, Y, rcond=None)[0]
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    if U.shape[1] < k or s[k - 1] <= 1e-12 * s[0]:
        raise PHMORError(f"complement has numerical rank below {k}")
    return sla.solve_triangular(L.T, U[:, :k], lower=False)


def secondary_basis(source: str, sys, V, snaps, rom, u_train, grid, k, rng, scheme="exponential"):
    """H-orthonormal ``V_+`` (``k`` columns) with ``[V V_+]`` H-orthonormal.

    ``pod_extension`` takes further POD modes of the state snapshots,
    ``error_augmented`` compresses training-error snapshots and
    ``random_complement`` uses Gaussian random directions.
    """
    if source == "pod_extension":
        return extend_hierarchical(V, snaps, sys, V.n + k).V[:, V.n:]
    if source == "error_augmented":
        err = snaps.data.T - solve(rom.lti(), u_train, grid, scheme).states @ rom.V.T
        return _h_orthonormal_complement(err.T, V.V, sys, k)
    if source == "random_complement":
        return _h_orthonormal_complement(rng.standard_normal((sys.N, k)), V.V, sys, k)
    raise ConfigError(f"unknown secondary-basis source {source!r}")


def certify_prop1_cmd(cfg: ExperimentConfig, out_dir=None, every: int | None = None, stream=None):
    """Certify equality of the ALP and hierarchical bounds on ``[V V_+]``.

    Returns ``(exit_code, reports)``: 0 if every source is certified or
    reported as precondition-unmet, 3 if any deviation exceeds the tolerance.
    """
    stage = _Stages()
    rng = np.random.default_rng(cfg.seed)
    opts = cfg.prop1
    with stage("model"):
        sys = build_model(cfg)
        _check_sizes(cfg, sys.N)
        grid = _grid(cfg)
        u_train = make_input(cfg.train_input, sys.m)
        u_test = make_input(cfg.test_input, sys.m)
        fom_solver, scheme = _schemes(cfg, sys)
    with stage("train"):
        snaps = SnapshotSet.from_trajectory(solve_fom(sys, u_train, grid, fom_solver, cfg.tolerances.oracle_limit))
    with stage("basisgen"):
        V = pod_state(snaps, sys, cfg.n)
        rom = reduce(sys, V)
        if opts.x0 == "zero":
            x0 = np.zeros(sys.N)
        elif opts.x0 == "span":
            x0 = V.V @ rng.standard_normal(cfg.n)
        else:
            x0 = rng.standard_normal(sys.N)
        tsys = sys.with_x0(x0)
        k = cfg.n_H - cfg.n
        plus = {}
        for src in opts.sources:
            Vp = secondary_basis(src, sys, V, snaps, rom, u_train, grid, k, rng, scheme)
            if opts.scale_secondary:
                Vp = Vp * rng.uniform(0.5, 2.0, size=k)
            if opts.mix_primal:
                Vp = Vp + V.V @ rng.standard_normal((cfg.n, k))
            plus[src] = Vp
    reports = {}
    with stage("prop1"):
        for src, Vp in plus.items():
            reports[src] = certify_prop1(tsys, V.V, Vp, u_test, grid, cfg.tolerances.prop1_tol, scheme)
    step = every or max(1, grid.n_steps // 20)
    for src, rep in reports.items():
        held = [p for p, ok in rep.properties.items() if ok]
        print(f"[{src}] status={rep.status} max|dA-dH|={rep.max_abs_deviation:.3e} "
              f"relative={rep.relative_deviation:.3e} tol={rep.tol:g} "
              f"properties={held or 'none'}", file=stream)
        print(rep.table(step), file=stream)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = [list(COLUMN_DOCS["prop1.csv"])]
        for src, rep in reports.items():
            for kk, t in enumerate(grid.times):
                rows.append([float(t), src, float(rep.alp.values[kk]),
                             float(rep.hierarchical.values[kk]), float(rep.deviation[kk])])
        files = {}
        _write(out, files, "prop1.csv", _long_csv(rows))
        manifest = {
            "package": "phmor", "version": __version__, "config": cfg.to_dict(),
            "resolved": {"N": sys.N, "scheme": scheme, "fom_solver": fom_solver, "dt": grid.dt},
            "results": {src: {"status": r.status, "relative_deviation": r.relative_deviation,
                              "max_abs_deviation": r.max_abs_deviation,
                              "properties": r.properties,
                              "initial_condition_residual": r.initial_condition_residual}
                        for src, r in reports.items()},
            "files": files, "stage_seconds": stage.times,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    code = 3 if any(r.status == "violated" for r in reports.values()) else 0
    return code, reports
