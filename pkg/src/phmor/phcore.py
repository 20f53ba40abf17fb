"""Port-Hamiltonian system types, structural validation and energy norms.

A standard linear pH system reads

    x'(t) = (J - D) H x(t) + B u(t),    y(t) = B^T H x(t),

with ``J`` skew, ``D`` symmetric positive semidefinite and ``H`` symmetric
positive definite. The energy inner product is ``<x, z>_H = x^T H z``; all
norm computations go through the Cholesky factor ``H = L L^T`` so that
``||x||_H = ||L^T x||_2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import GridMismatch, NotSPD, ShapeMismatch, SingularE, StructureError

__all__ = [
    "TOL_STRUCT",
    "TOL_PSD",
    "Check",
    "ValidationReport",
    "DescriptorPHSystem",
    "PHSystem",
    "InputSignal",
    "ZeroInput",
    "SinusoidInput",
    "TabulatedInput",
    "validate_ph_structure",
    "descriptor_to_standard",
    "embed_as_descriptor",
    "energy_norm",
    "energy_norms",
    "energy_operator_norm",
    "hamiltonian",
    "output",
    "DissipationReport",
    "check_dissipation_inequality",
]

TOL_STRUCT = 1e-10
TOL_PSD = 1e-10


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=float, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeMismatch(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _fro(a):
    return float(np.linalg.norm(a, "fro"))


def _sym_if_close(M, tol):
    """Symmetrize ``M`` when its asymmetry is within ``tol`` (relative)."""
    asym = _fro(M - M.T)
    if asym <= tol * max(1.0, _fro(M)):
        return 0.5 * (M + M.T)
    return M


# Validation ==================================================================
@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    residual: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            flag = "ok  " if c.passed else "FAIL"
            lines.append(f"{flag} {c.name:<18} residual={c.residual:.3e} threshold={c.threshold:.3e}")
        return "\n".join(lines)


def _check_skew(J, tol, name="J_skew"):
    res = _fro(J + J.T)
    thr = tol * max(1.0, _fro(J))
    return Check(name, res <= thr, res, thr)


def _check_sym_psd(D, tol_struct, tol_psd, prefix="D"):
    res = _fro(D - D.T)
    thr = tol_struct * max(1.0, _fro(D))
    lam_min = float(np.linalg.eigvalsh(0.5 * (D + D.T))[0]) if D.size else 0.0
    return (
        Check(f"{prefix}_sym", res <= thr, res, thr),
        Check(f"{prefix}_psd", lam_min >= -tol_psd, max(0.0, -lam_min), tol_psd,
              detail=f"lambda_min={lam_min:.6e}"),
    )


def _check_spd(H, factor, tol_struct, name="H_spd"):
    normH = _fro(H)
    asym = _fro(H - H.T)
    thr = tol_struct * normH
    if factor is None:
        return Check(name, False, float("inf"), thr, detail="Cholesky factorization failed")
    recon = _fro(factor @ factor.T - H)
    res = max(asym, recon)
    return Check(name, res <= thr, res, thr, detail=f"asymmetry={asym:.3e} factor_residual={recon:.3e}")


def _try_cholesky(H):
    try:
        return np.linalg.cholesky(0.5 * (H + H.T))
    except np.linalg.LinAlgError:
        return None


# System types ================================================================
@dataclass(frozen=True, eq=False)
class DescriptorPHSystem:
    """Descriptor pH system ``E x~' = (J - D) Q x~ + B u``, ``x~(t0) = x0_tilde``."""

    E: np.ndarray
    Q: np.ndarray
    J: np.ndarray
    D: np.ndarray
    B: np.ndarray
    x0_tilde: np.ndarray | None = None
    tol_struct: float = TOL_STRUCT
    tol_psd: float = TOL_PSD

    def __post_init__(self):
        E = _frozen(self.E, 2, "E")
        N = E.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        x0 = np.zeros(N) if self.x0_tilde is None else self.x0_tilde
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "Q", _frozen(self.Q, 2, "Q"))
        object.__setattr__(self, "J", _frozen(self.J, 2, "J"))
        D = _sym_if_close(np.asarray(self.D, dtype=float), self.tol_struct)
        object.__setattr__(self, "D", _frozen(D, 2, "D"))
        object.__setattr__(self, "B", _frozen(B, 2, "B"))
        object.__setattr__(self, "x0_tilde", _frozen(x0, 1, "x0_tilde"))
        for name in ("E", "Q", "J", "D"):
            if getattr(self, name).shape != (N, N):
                raise ShapeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {(N, N)}")
        if self.B.shape[0] != N or self.x0_tilde.shape != (N,):
            raise ShapeMismatch("B rows and x0_tilde length must equal N")

    @property
    def N(self) -> int:
        return self.E.shape[0]

    def validate(self) -> ValidationReport:
        EtQ = self.E.T @ self.Q
        res = _fro(EtQ - self.Q.T @ self.E)
        thr = self.tol_struct * _fro(EtQ)
        checks = [Check("EQ_symmetry", res <= thr, res, thr), _check_skew(self.J, self.tol_struct)]
        checks.extend(_check_sym_psd(self.D, self.tol_struct, self.tol_psd))
        checks.append(Check("shape_consistency", True, 0.0, 0.0))
        return ValidationReport(tuple(checks))


@dataclass(frozen=True, eq=False)
class PHSystem:
    """Standard linear port-Hamiltonian system ``x' = (J - D) H x + B u``.

    Matrices are copied and made read-only. ``H`` and ``D`` are symmetrized
    when their asymmetry is below ``tol_struct``. The Cholesky factor of
    ``H`` is computed once here and cached as ``h_factor``.

    Parameters
    ----------
    J, D, H : (N, N) array_like
        Structure, dissipation and energy matrices.
    B : (N, m) array_like
        Port matrix; a 1-D array is treated as a single input column.
    x0 : (N,) array_like, optional
        Initial state, zero by default.
    validate : bool
        Raise :class:`~phmor.errors.StructureError` if any structural check
        fails. Pass ``False`` to build a system only for inspection.
    """

    J: np.ndarray
    D: np.ndarray
    H: np.ndarray
    B: np.ndarray
    x0: np.ndarray | None = None
    tol_struct: float = TOL_STRUCT
    tol_psd: float = TOL_PSD
    validate: bool = field(default=True, repr=False)
    h_factor: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ShapeMismatch(f"J must be square, got shape {J.shape}")
        N = J.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        x0 = np.zeros(N) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        D = np.asarray(self.D, dtype=float)
        H = np.asarray(self.H, dtype=float)
        for name, M in (("D", D), ("H", H)):
            if M.shape != (N, N):
                raise ShapeMismatch(f"{name} has shape {M.shape}, expected {(N, N)}")
        if B.ndim != 2 or B.shape[0] != N:
            raise ShapeMismatch(f"B has shape {B.shape}, expected ({N}, m)")
        if x0.shape != (N,):
            raise ShapeMismatch(f"x0 has length {x0.size}, expected {N}")
        D = _sym_if_close(D, self.tol_struct)
        H = _sym_if_close(H, self.tol_struct)
        object.__setattr__(self, "J", _frozen(J, 2, "J"))
        object.__setattr__(self, "D", _frozen(D, 2, "D"))
        object.__setattr__(self, "H", _frozen(H, 2, "H"))
        object.__setattr__(self, "B", _frozen(B, 2, "B"))
        object.__setattr__(self, "x0", _frozen(x0, 1, "x0"))
        L = _try_cholesky(self.H)
        if L is not None:
            L.setflags(write=False)
        object.__setattr__(self, "h_factor", L)
        if self.validate:
            report = validate_ph_structure(self, self.tol_struct, self.tol_psd)
            if not report.passed:
                cls = NotSPD if report.failed() == ["H_spd"] else StructureError
                raise cls("pH structure violated: " + ", ".join(report.failed()), report)

    @property
    def N(self) -> int:
        return self.J.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def L(self) -> np.ndarray:
        if self.h_factor is None:
            raise NotSPD("H is not positive definite; no Cholesky factor available")
        return self.h_factor

    @property
    def A(self) -> np.ndarray:
        """System matrix ``(J - D) H``."""
        return (self.J - self.D) @ self.H

    def with_x0(self, x0) -> "PHSystem":
        return PHSystem(self.J, self.D, self.H, self.B, x0, self.tol_struct, self.tol_psd, self.validate)


def validate_ph_structure(sys: PHSystem, tol_struct: float = TOL_STRUCT,
                          tol_psd: float = TOL_PSD) -> ValidationReport:
    """Run the named structural checks on ``sys``.

    Checks are ``J_skew``, ``D_sym``, ``D_psd``, ``H_spd`` and
    ``shape_consistency``; each records its measured residual.
    Inconsistent shapes are rejected when the system is built, so
    ``shape_consistency`` always passes on a constructed system.
    """
    N = sys.J.shape[0]
    shapes_ok = (sys.D.shape == (N, N) and sys.H.shape == (N, N)
                 and sys.B.shape[0] == N and sys.x0.shape == (N,))
    if not shapes_ok:
        raise ShapeMismatch("inconsistent system dimensions")
    checks = [_check_skew(sys.J, tol_struct)]
    checks.extend(_check_sym_psd(sys.D, tol_struct, tol_psd))
    checks.append(_check_spd(sys.H, sys.h_factor, tol_struct))
    checks.append(Check("shape_consistency", True, 0.0, 0.0, detail=f"N={N} m={sys.B.shape[1]}"))
    return ValidationReport(tuple(checks))


def descriptor_to_standard(dsys: DescriptorPHSystem, x0_convention: str = "transform",
                           validate: bool = True) -> PHSystem:
    """Transform a descriptor system with nonsingular ``E`` to standard form.

    Uses ``x = E x~`` so ``H = Q E^{-1}`` (symmetrized). With
    ``x0_convention="transform"`` the initial state is ``E x0_tilde``;
    ``"literal"`` uses ``E^{-1} x0_tilde`` instead.
    """
    E = dsys.E
    with warnings.catch_warnings():
        # singularity is detected from the pivots below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(E, check_finite=False)
    diag = np.abs(np.diag(lu))
    scale = max(float(np.max(np.abs(E))), np.finfo(float).tiny)
    if diag.size == 0 or np.min(diag) <= dsys.N * np.finfo(float).eps * scale:
        raise SingularE("E is singular to working precision")
    # H = Q E^{-1}  <=>  E^T H^T = Q^T
    H = sla.lu_solve((lu, piv), dsys.Q.T, trans=1).T
    H = 0.5 * (H + H.T)
    if x0_convention == "transform":
        x0 = E @ dsys.x0_tilde
    elif x0_convention == "literal":
        x0 = sla.lu_solve((lu, piv), dsys.x0_tilde)
    else:
        raise ValueError(f"unknown x0_convention {x0_convention!r}")
    sys = PHSystem(dsys.J, dsys.D, H, dsys.B, x0, dsys.tol_struct, dsys.tol_psd, validate=False)
    report = validate_ph_structure(sys, dsys.tol_struct, dsys.tol_psd)
    if not report["H_spd"].passed:
        raise NotSPD("H = Q E^{-1} is not symmetric positive definite "
                     "(E and Q must commute)", report)
    if validate and not report.passed:
        raise StructureError("pH structure violated: " + ", ".join(report.failed()), report)
    return PHSystem(sys.J, sys.D, sys.H, sys.B, sys.x0, dsys.tol_struct, dsys.tol_psd, validate=False)


def embed_as_descriptor(sys: PHSystem) -> DescriptorPHSystem:
    """View a standard system as a descriptor system with ``E = I``, ``Q = H``."""
    return DescriptorPHSystem(np.eye(sys.N), sys.H, sys.J, sys.D, sys.B, sys.x0,
                              sys.tol_struct, sys.tol_psd)


# Energy norms ================================================================
def energy_norm(sys: PHSystem, x) -> float:
    """Return ``||x||_H = ||L^T x||_2``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.N,):
        raise ShapeMismatch(f"x has shape {x.shape}, expected ({sys.N},)")
    return float(np.linalg.norm(sys.L.T @ x))


def energy_norms(sys: PHSystem, X) -> np.ndarray:
    """Row-wise energy norms of a ``(k, N)`` array of states."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != sys.N:
        raise ShapeMismatch(f"states have width {X.shape[1]}, expected {sys.N}")
    return np.linalg.norm(X @ sys.L, axis=1)


def energy_operator_norm(sys: PHSystem, A) -> float:
    """Induced energy norm of ``A``: the largest singular value of ``L^T A L^{-T}``."""
    A = np.asarray(A, dtype=float)
    if A.shape != (sys.N, sys.N):
        raise ShapeMismatch(f"A has shape {A.shape}, expected {(sys.N, sys.N)}")
    L = sys.L
    M = L.T @ A
    # M L^{-T} = (L^{-1} M^T)^T
    C = sla.solve_triangular(L, M.T, lower=True).T
    return float(np.linalg.norm(C, 2))


def hamiltonian(sys: PHSystem, x) -> float:
    """Stored energy ``x^T H x / 2``."""
    return 0.5 * energy_norm(sys, x) ** 2


def output(sys: PHSystem, X) -> np.ndarray:
    """Port output ``y = B^T H x`` for a state or a ``(k, N)`` array of states."""
    X = np.asarray(X, dtype=float)
    return X @ (sys.H @ sys.B)


# Inputs ======================================================================
class InputSignal:
    """Time-dependent input ``u(t)`` of dimension ``m``.

    Subclasses implement :meth:`sample`, which evaluates at an array of
    times and returns shape ``(len(times), m)``.
    """

    m: int

    def sample(self, times) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float) -> np.ndarray:
        return self.sample(np.array([t], dtype=float))[0]

    def covers(self, t0: float, T: float) -> bool:
        return True


@dataclass(frozen=True)
class ZeroInput(InputSignal):
    m: int = 1

    def sample(self, times):
        return np.zeros((np.size(times), self.m))


@dataclass(frozen=True, eq=False)
class SinusoidInput(InputSignal):
    """``u(t) = amplitude * sin(2 pi frequency t + phase)`` on every channel.

    ``amplitude`` may be a scalar or a length-``m`` sequence.
    """

    amplitude: float | Sequence[float] = 1.0
    frequency: float = 1.0
    phase: float = 0.0
    m: int = 1

    def __post_init__(self):
        amp = np.broadcast_to(np.asarray(self.amplitude, dtype=float), (self.m,)).copy()
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.frequency

    def sample(self, times):
        t = np.asarray(times, dtype=float).reshape(-1, 1)
        return np.sin(self.omega * t + self.phase) * self.amplitude


@dataclass(frozen=True, eq=False)
class TabulatedInput(InputSignal):
    """Piecewise-linear interpolation of samples ``values[i]`` at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _frozen(self.times, 1, "times")
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.shape[0] != t.size:
            raise ShapeMismatch(f"{v.shape[0]} value rows for {t.size} times")
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("tabulated times must be strictly increasing (at least two)")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", _frozen(v, 2, "values"))

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def covers(self, t0, T):
        span = self.times[-1] - self.times[0]
        slack = 1e-12 * max(1.0, abs(span))
        return self.times[0] - slack <= t0 and T <= self.times[-1] + slack

    def sample(self, times):
        t = np.asarray(times, dtype=float).ravel()
        lo, hi = self.times[0], self.times[-1]
        slack = 1e-12 * max(1.0, hi - lo)
        if t.size and (t.min() < lo - slack or t.max() > hi + slack):
            raise GridMismatch(f"tabulated input defined on [{lo}, {hi}], requested "
                               f"[{t.min()}, {t.max()}]")
        t = np.clip(t, lo, hi)
        return np.column_stack([np.interp(t, self.times, self.values[:, j]) for j in range(self.m)])


# Dissipation inequality ======================================================
@dataclass(frozen=True, eq=False)
class DissipationReport:
    passed: bool
    worst_violation: float
    slack_tol: float
    energy: np.ndarray
    supplied: np.ndarray
    max_abs_energy_drift: float

    @property
    def slack(self) -> np.ndarray:
        """``H(x(t_k)) - H(x(t0)) - int y^T u``; nonpositive when the inequality holds."""
        return self.energy - self.energy[0] - self.supplied


def check_dissipation_inequality(sys: PHSystem, traj, u: InputSignal,
                                 slack_tol: float) -> DissipationReport:
    """Check ``H(x(t_k)) - H(x(t0)) <= int_{t0}^{t_k} y^T u dt + slack_tol``.

    The supplied energy is integrated with the same rule as the error-bound
    integrals (Simpson when the trajectory carries interval midpoints,
    composite trapezoid otherwise).
    """
    from .integrators import integrate_series

    grid = traj.grid
    if u.m != sys.m:
        raise ShapeMismatch(f"input dimension {u.m} != port dimension {sys.m}")
    if not u.covers(grid.t0, grid.T):
        raise GridMismatch("input does not cover the trajectory grid")
    X = traj.states
    power = np.einsum("ij,ij->i", output(sys, X), u.sample(grid.times))
    mid_power = None
    if traj.midpoints is not None:
        mid_power = np.einsum("ij,ij->i", output(sys, traj.midpoints), u.sample(grid.midpoints))
    supplied = integrate_series(grid, power, mid_power, nonnegative=False)
    energy = 0.5 * energy_norms(sys, X) ** 2
    slack = energy - energy[0] - supplied
    worst = float(np.max(slack))
    return DissipationReport(
        passed=worst <= slack_tol,
        worst_violation=worst,
        slack_tol=slack_tol,
        energy=energy,
        supplied=supplied,
        max_abs_energy_drift=float(np.max(np.abs(energy - energy[0]))),
    )
