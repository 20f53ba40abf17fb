"""Time integration of linear systems ``M z' = A z + G w(t)`` and quadrature.

Two schemes are provided:

* :func:`solve_implicit_midpoint` -- fixed-step implicit midpoint, one LU
  factorization per run, input sampled at interval midpoints;
* :func:`solve_exponential` -- stepwise exact propagation with
  ``exp(M^{-1} A dt)`` and Gauss-Legendre quadrature of the input
  convolution on every step. :func:`solve_expm_oracle` applies it to a
  full-order pH system.

Both return a :class:`Trajectory` that may also carry the states at the
interval midpoints; the bound integrals use them for Simpson's rule.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (GridMismatch, NegativeValueWarning, OracleTooLarge,
                     ShapeMismatch, SingularStep)
from .phcore import InputSignal, PHSystem

__all__ = [
    "ORACLE_LIMIT",
    "GAUSS_NODES",
    "TimeGrid",
    "Trajectory",
    "GeneralizedLTI",
    "solve_implicit_midpoint",
    "solve_exponential",
    "solve_expm_oracle",
    "solve",
    "integrate_series",
]

ORACLE_LIMIT = 512
GAUSS_NODES = 8


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 = t_0 < t_1 < ... < t_{n_steps} = T``."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got t0={self.t0}, T={self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = self.t0 + self.dt * np.arange(self.n_steps + 1)
        t[-1] = self.T
        return t

    @property
    def midpoints(self) -> np.ndarray:
        return self.t0 + self.dt * (np.arange(self.n_steps) + 0.5)

    def __len__(self):
        return self.n_steps + 1

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.n_steps * factor)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States sampled on a grid; row ``k`` is the state at ``grid.times[k]``.

    ``midpoints``, when present, holds the states at the interval midpoints
    (row ``k`` at ``t_k + dt/2``). ``scheme`` names the integrator that
    produced the samples.
    """

    grid: TimeGrid
    states: np.ndarray
    midpoints: np.ndarray | None = None
    scheme: str = "unknown"

    def __post_init__(self):
        X = np.asarray(self.states, dtype=float)
        if X.ndim != 2 or X.shape[0] != len(self.grid):
            raise ShapeMismatch(f"states shape {X.shape} does not match {len(self.grid)} grid points")
        if not np.all(np.isfinite(X)):
            raise ValueError("trajectory contains non-finite values")
        X.setflags(write=False)
        object.__setattr__(self, "states", X)
        if self.midpoints is not None:
            Xm = np.asarray(self.midpoints, dtype=float)
            if Xm.shape != (self.grid.n_steps, X.shape[1]):
                raise ShapeMismatch(f"midpoint states shape {Xm.shape} does not match grid")
            Xm.setflags(write=False)
            object.__setattr__(self, "midpoints", Xm)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def map(self, fn) -> "Trajectory":
        """Apply a row-wise linear map (e.g. lifting) to all samples."""
        mid = None if self.midpoints is None else fn(self.midpoints)
        return Trajectory(self.grid, fn(self.states), mid, self.scheme)


@dataclass(frozen=True, eq=False)
class GeneralizedLTI:
    """``M z' = A z + G w(t)`` with ``M`` symmetric positive definite."""

    M: np.ndarray
    A: np.ndarray
    G: np.ndarray
    z0: np.ndarray
    m_factor: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        A = np.asarray(self.A, dtype=float)
        G = np.asarray(self.G, dtype=float)
        if G.ndim == 1:
            G = G.reshape(-1, 1)
        z0 = np.asarray(self.z0, dtype=float).ravel()
        d = A.shape[0]
        if M.shape != (d, d) or A.shape != (d, d) or G.shape[0] != d or z0.shape != (d,):
            raise ShapeMismatch(f"inconsistent shapes M{M.shape} A{A.shape} G{G.shape} z0{z0.shape}")
        try:
            Lm = np.linalg.cholesky(0.5 * (M + M.T))
        except np.linalg.LinAlgError as exc:
            raise ShapeMismatch("mass matrix M is not symmetric positive definite") from exc
        for name, val in (("M", M), ("A", A), ("G", G), ("z0", z0), ("m_factor", Lm)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.G.shape[1]

    def explicit(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(M^{-1} A, M^{-1} G)``."""
        cf = (self.m_factor, True)
        return sla.cho_solve(cf, self.A), sla.cho_solve(cf, self.G)


def _check_input(w: InputSignal, p: int, grid: TimeGrid):
    if w.m != p:
        raise ShapeMismatch(f"input has dimension {w.m}, system expects {p}")
    if not w.covers(grid.t0, grid.T):
        raise GridMismatch(f"input does not cover [{grid.t0}, {grid.T}]")


def solve_implicit_midpoint(sys: GeneralizedLTI, w, grid: TimeGrid) -> Trajectory:
    """Implicit midpoint rule on a uniform grid.

    Each step solves ``(M - dt/2 A) z_{k+1} = (M + dt/2 A) z_k + dt G w_k``
    with one LU factorization reused for all steps.

    Parameters
    ----------
    w : InputSignal or (n_steps, p) array
        Either a signal, sampled at ``t_k + dt/2``, or the per-step forcing
        values ``w_k`` themselves.

    Returns
    -------
    Trajectory
        Grid states; ``midpoints`` holds ``(z_k + z_{k+1}) / 2``, the
        states at which the scheme enforces the dynamics.
    """
    dt = grid.dt
    if isinstance(w, InputSignal):
        _check_input(w, sys.p, grid)
        W = w.sample(grid.midpoints)
    else:
        W = np.asarray(w, dtype=float)
        if W.ndim == 1:
            W = W.reshape(-1, 1)
        if W.shape != (grid.n_steps, sys.p):
            raise GridMismatch(f"forcing array shape {W.shape}, expected {(grid.n_steps, sys.p)}")
    lhs = sys.M - 0.5 * dt * sys.A
    rhs_mat = sys.M + 0.5 * dt * sys.A
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu = sla.lu_factor(lhs, check_finite=False)
        except (sla.LinAlgError, sla.LinAlgWarning, ValueError) as exc:
            raise SingularStep(f"step matrix M - dt/2 A is singular: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) == 0.0:
        raise SingularStep("step matrix M - dt/2 A is singular")
    forcing = dt * (W @ sys.G.T)
    Z = np.empty((grid.n_steps + 1, sys.dim))
    Z[0] = sys.z0
    for k in range(grid.n_steps):
        Z[k + 1] = sla.lu_solve(lu, rhs_mat @ Z[k] + forcing[k], check_finite=False)
    return Trajectory(grid, Z, 0.5 * (Z[1:] + Z[:-1]), scheme="midpoint")


def _exp_propagate(Aexp, Gexp, z0, w: InputSignal, grid: TimeGrid, nodes: int) -> np.ndarray:
    dt = grid.dt
    xi, wq = np.polynomial.legendre.leggauss(nodes)
    tau = 0.5 * (xi + 1.0) * dt
    wq = 0.5 * dt * wq
    Phi = sla.expm(Aexp * dt)
    # per-node kernels exp(A (dt - tau_j)) G, weighted
    kernels = np.stack([wj * (sla.expm(Aexp * (dt - tj)) @ Gexp) for tj, wj in zip(tau, wq)])
    tk = grid.times[:-1]
    U = w.sample((tk[:, None] + tau[None, :]).ravel()).reshape(grid.n_steps, nodes, -1)
    F = np.einsum("jdp,kjp->kd", kernels, U)
    Z = np.empty((grid.n_steps + 1, Aexp.shape[0]))
    Z[0] = z0
    for k in range(grid.n_steps):
        Z[k + 1] = Phi @ Z[k] + F[k]
    return Z


def solve_exponential(sys: GeneralizedLTI, w: InputSignal, grid: TimeGrid,
                      nodes: int = GAUSS_NODES, with_midpoints: bool = True) -> Trajectory:
    """Stepwise exact propagation of ``M z' = A z + G w``.

    ``z_{k+1} = exp(S dt) z_k + int_0^dt exp(S (dt - s)) M^{-1} G w(t_k + s) ds``
    with ``S = M^{-1} A``; the integral uses ``nodes``-point Gauss-Legendre
    quadrature. With ``with_midpoints`` the run is done on the grid refined
    by two and the odd samples are returned as interval midpoints.
    """
    _check_input(w, sys.p, grid)
    Aexp, Gexp = sys.explicit()
    if with_midpoints:
        Z = _exp_propagate(Aexp, Gexp, sys.z0, w, grid.refine(2), nodes)
        return Trajectory(grid, Z[::2], Z[1::2], scheme="exponential")
    Z = _exp_propagate(Aexp, Gexp, sys.z0, w, grid, nodes)
    return Trajectory(grid, Z, None, scheme="exponential")


def solve_expm_oracle(sys: PHSystem, u: InputSignal, grid: TimeGrid,
                      oracle_limit: int = ORACLE_LIMIT, nodes: int = GAUSS_NODES,
                      with_midpoints: bool = False) -> Trajectory:
    """Reference solution of the full-order pH system via the matrix exponential."""
    if sys.N > oracle_limit:
        raise OracleTooLarge(f"N={sys.N} exceeds oracle_limit={oracle_limit}")
    lti = GeneralizedLTI(np.eye(sys.N), sys.A, sys.B, sys.x0)
    return solve_exponential(lti, u, grid, nodes=nodes, with_midpoints=with_midpoints)


def solve(sys: GeneralizedLTI, w, grid: TimeGrid, scheme: str = "exponential") -> Trajectory:
    """Dispatch to the named scheme (``"exponential"`` or ``"midpoint"``)."""
    if scheme == "exponential":
        return solve_exponential(sys, w, grid)
    if scheme == "midpoint":
        return solve_implicit_midpoint(sys, w, grid)
    raise ValueError(f"unknown scheme {scheme!r}")


def integrate_series(grid: TimeGrid, values, midpoint_values=None, *, nonnegative: bool = True) -> np.ndarray:
    """Running integral ``int_{t0}^{t_k} f dt`` at every grid point.

    Composite trapezoid on the grid values by default. When
    ``midpoint_values`` (length ``n_steps``) are given, each interval uses
    Simpson's rule ``dt/6 (f_k + 4 f_{k+1/2} + f_{k+1})`` instead.
    ``output[0]`` is always 0.
    """
    f = np.asarray(values, dtype=float)
    if f.shape != (len(grid),):
        raise ShapeMismatch(f"values have shape {f.shape}, expected ({len(grid)},)")
    if not np.all(np.isfinite(f)):
        raise ValueError("values must be finite")
    if nonnegative and np.any(f < 0):
        warnings.warn("integrand has negative entries", NegativeValueWarning, stacklevel=2)
    dt = grid.dt
    if midpoint_values is None:
        incr = 0.5 * dt * (f[:-1] + f[1:])
    else:
        fm = np.asarray(midpoint_values, dtype=float)
        if fm.shape != (grid.n_steps,):
            raise ShapeMismatch(f"midpoint values have shape {fm.shape}, expected ({grid.n_steps},)")
        if nonnegative and np.any(fm < 0):
            warnings.warn("integrand has negative entries", NegativeValueWarning, stacklevel=2)
        incr = dt / 6.0 * (f[:-1] + 4.0 * fm + f[1:])
    out = np.zeros_like(f)
    np.cumsum(incr, out=out[1:])
    return out
