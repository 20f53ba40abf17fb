import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from phmor.errors import GridMismatch, NotSPD, ShapeMismatch, SingularE, StructureError
from phmor.integrators import TimeGrid, solve_expm_oracle
from phmor.phcore import (DescriptorPHSystem, PHSystem, SinusoidInput, TabulatedInput, ZeroInput,
                          check_dissipation_inequality, descriptor_to_standard, embed_as_descriptor,
                          energy_norm, energy_norms, energy_operator_norm, hamiltonian, output,
                          validate_ph_structure)

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
Z2 = np.zeros((2, 2))
B2 = np.array([[0.0], [1.0]])


def _sys(J=J2, D=None, H=None, **kw):
    return PHSystem(J, Z2 if D is None else D, np.eye(2) if H is None else H, B2, **kw)


def _random_ph(rng, N=6, m=2):
    A = rng.standard_normal((N, N))
    G = rng.standard_normal((N, N))
    R = rng.standard_normal((N, N // 2))
    return PHSystem(A - A.T, R @ R.T, G @ G.T + N * np.eye(N), rng.standard_normal((N, m)),
                    rng.standard_normal(N))


class TestValidation:
    def test_damped_oscillator_passes(self):
        rep = validate_ph_structure(_sys(D=np.diag([0.0, 0.1])))
        assert rep.passed
        assert {c.name for c in rep.checks} == {"J_skew", "D_sym", "D_psd", "H_spd", "shape_consistency"}

    def test_non_skew_J_residual(self):
        J = np.array([[0.0, 1.0], [-0.9, 0.0]])
        rep = validate_ph_structure(_sys(J=J, validate=False))
        assert not rep["J_skew"].passed
        # ||J + J^T||_F = sqrt(0.1^2 + 0.1^2)
        assert rep["J_skew"].residual == pytest.approx(np.sqrt(0.02), rel=1e-14)
        assert rep.failed() == ["J_skew"]

    def test_indefinite_D(self):
        rep = validate_ph_structure(_sys(D=np.diag([-1e-3, 1.0]), validate=False))
        assert not rep["D_psd"].passed
        assert rep["D_psd"].residual == pytest.approx(1e-3)

    def test_constructor_raises(self):
        with pytest.raises(StructureError) as ei:
            _sys(D=np.diag([-1e-3, 1.0]))
        assert ei.value.report is not None and "D_psd" in ei.value.report.failed()
        with pytest.raises(NotSPD):
            _sys(H=np.diag([1.0, -1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            PHSystem(J2, Z2, np.eye(3), B2)
        with pytest.raises(ShapeMismatch):
            PHSystem(J2, Z2, np.eye(2), np.ones((3, 1)))

    def test_near_symmetric_input_is_symmetrized(self):
        H = np.array([[2.0, 1.0], [1.0 + 1e-14, 2.0]])
        s = _sys(H=H)
        np.testing.assert_array_equal(s.H, s.H.T)
        np.testing.assert_allclose(s.L @ s.L.T, s.H, rtol=1e-14)

    def test_matrices_read_only(self):
        s = _sys()
        with pytest.raises(ValueError):
            s.H[0, 0] = 5.0


class TestDescriptor:
    def test_identity_E(self, rng):
        G = rng.standard_normal((3, 3))
        H0 = G @ G.T + np.eye(3)
        x0 = rng.standard_normal(3)
        s = descriptor_to_standard(DescriptorPHSystem(np.eye(3), H0, np.zeros((3, 3)),
                                                      np.zeros((3, 3)), np.ones(3), x0))
        np.testing.assert_allclose(s.H, H0, rtol=1e-14)
        np.testing.assert_allclose(s.x0, x0)

    def test_scalar_E(self):
        x0 = np.array([1.0, -2.0])
        s = descriptor_to_standard(DescriptorPHSystem(2 * np.eye(2), np.eye(2), J2, Z2, B2, x0))
        np.testing.assert_allclose(s.H, 0.5 * np.eye(2))
        np.testing.assert_allclose(s.x0, 2 * x0)
        lit = descriptor_to_standard(DescriptorPHSystem(2 * np.eye(2), np.eye(2), J2, Z2, B2, x0),
                                     x0_convention="literal")
        np.testing.assert_allclose(lit.x0, 0.5 * x0)

    def test_singular_E(self):
        with pytest.raises(SingularE):
            descriptor_to_standard(DescriptorPHSystem(np.diag([1.0, 0.0]), np.eye(2), J2, Z2, B2))

    def test_non_commuting_gives_not_spd(self):
        E = np.array([[1.0, 0.0], [0.0, 1.0]])
        Q = np.array([[1.0, 0.0], [0.0, -1.0]])
        with pytest.raises(NotSPD):
            descriptor_to_standard(DescriptorPHSystem(E, Q, J2, Z2, B2))

    def test_embed_round_trip(self, rng):
        s = _random_ph(rng)
        back = descriptor_to_standard(embed_as_descriptor(s))
        for name in ("J", "D", "H", "B", "x0"):
            np.testing.assert_allclose(getattr(back, name), getattr(s, name), rtol=0, atol=1e-14 * 50)

    def test_descriptor_validate(self):
        rep = DescriptorPHSystem(np.eye(2), np.eye(2), J2, Z2, B2).validate()
        assert rep.passed and "EQ_symmetry" in [c.name for c in rep.checks]


class TestNorms:
    def test_examples(self):
        assert energy_norm(_sys(), [3.0, 4.0]) == pytest.approx(5.0)
        assert energy_norm(_sys(H=np.diag([4.0, 9.0])), [1.0, 1.0]) == pytest.approx(np.sqrt(13))
        assert energy_norm(_sys(), [0.0, 0.0]) == 0.0

    def test_operator_norm_examples(self):
        assert energy_operator_norm(_sys(), np.eye(2)) == pytest.approx(1.0)
        assert energy_operator_norm(_sys(), np.diag([2.0, -3.0])) == pytest.approx(3.0)
        s = _sys(H=np.diag([4.0, 1.0]))
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        # oracle: symmetric square-root conjugation, dense SVD
        Hh = np.diag([2.0, 1.0])
        oracle = np.linalg.svd(Hh @ A @ np.linalg.inv(Hh), compute_uv=False)[0]
        assert energy_operator_norm(s, A) == pytest.approx(oracle) == pytest.approx(2.0)

    def test_hamiltonian_examples(self):
        assert hamiltonian(_sys(), [0.0, 0.0]) == 0.0
        assert hamiltonian(_sys(), [1.0, 1.0]) == pytest.approx(1.0)
        assert hamiltonian(_sys(H=np.diag([2.0, 8.0])), [1.0, 0.5]) == pytest.approx(2.0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)), st.integers(0, 2**31))
    def test_norm_matches_quadratic_form(self, x, seed):
        s = _random_ph(np.random.default_rng(seed))
        q = float(x @ s.H @ x)
        assert energy_norm(s, x) ** 2 == pytest.approx(q, rel=1e-12, abs=1e-12 * max(1, np.abs(x).max()) ** 2)
        assert hamiltonian(s, x) >= 0

    def test_hamiltonian_positive(self, rng):
        s = _random_ph(rng)
        for _ in range(50):
            assert hamiltonian(s, rng.standard_normal(6)) > 0

    def test_submultiplicative(self, rng):
        s = _random_ph(rng)
        for _ in range(20):
            A, B = rng.standard_normal((2, 6, 6))
            lhs = energy_operator_norm(s, A @ B)
            assert lhs <= energy_operator_norm(s, A) * energy_operator_norm(s, B) * (1 + 1e-10)

    def test_energy_norms_rowwise(self, rng):
        s = _random_ph(rng)
        X = rng.standard_normal((5, 6))
        np.testing.assert_allclose(energy_norms(s, X), [energy_norm(s, x) for x in X], rtol=1e-14)

    def test_output(self, rng):
        s = _random_ph(rng)
        x = rng.standard_normal(6)
        np.testing.assert_allclose(output(s, x[None])[0], s.B.T @ s.H @ x, rtol=1e-12)


class TestInputs:
    def test_sinusoid(self):
        u = SinusoidInput(2.0, 0.5, 0.0)
        np.testing.assert_allclose(u.sample([0.0, 0.5]), [[0.0], [2.0]], atol=1e-15)
        assert u(0.5)[0] == pytest.approx(2.0)

    def test_zero(self):
        assert np.all(ZeroInput(3).sample(np.linspace(0, 1, 4)) == 0)

    def test_tabulated(self):
        u = TabulatedInput([0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
        np.testing.assert_allclose(u.sample([0.5, 1.5]), [[1.0], [1.0]])
        assert u.covers(0.0, 2.0) and not u.covers(0.0, 3.0)
        with pytest.raises(GridMismatch):
            u.sample([2.5])
        with pytest.raises(ValueError):
            TabulatedInput([0.0, 0.0], [1.0, 1.0])


class TestDissipation:
    def test_conservative_free_flow(self):
        s = _sys(x0=np.array([1.0, 0.5]))
        traj = solve_expm_oracle(s, ZeroInput(1), TimeGrid(0, 10, 200))
        rep = check_dissipation_inequality(s, traj, ZeroInput(1), 1e-10 * hamiltonian(s, s.x0))
        assert rep.passed and rep.max_abs_energy_drift <= 1e-10 * hamiltonian(s, s.x0)

    def test_damped_free_flow_nonincreasing(self):
        s = _sys(D=np.diag([0.0, 0.3]), x0=np.array([1.0, 0.0]))
        traj = solve_expm_oracle(s, ZeroInput(1), TimeGrid(0, 10, 200))
        e = 0.5 * energy_norms(s, traj.states) ** 2
        assert np.all(np.diff(e) <= 1e-15)

    def test_grid_mismatch(self):
        s = _sys()
        traj = solve_expm_oracle(s, ZeroInput(1), TimeGrid(0, 1, 10))
        with pytest.raises(GridMismatch):
            check_dissipation_inequality(s, traj, TabulatedInput([0.0, 0.5], [0.0, 1.0]), 1e-8)
