"""Energy-weighted POD bases from state and error snapshots."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NotNested, RankDeficient, ShapeMismatch
from .integrators import ORACLE_LIMIT, TimeGrid, solve, solve_expm_oracle, solve_implicit_midpoint, GeneralizedLTI
from .phcore import InputSignal, PHSystem

__all__ = [
    "SnapshotSet",
    "Basis",
    "make_basis",
    "pod_state",
    "extend_hierarchical",
    "alp_basis_from_errors",
    "collect_error_snapshots",
    "solve_fom",
]

SV_CUTOFF = 1e-14


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Snapshot matrix with one snapshot per column."""

    data: np.ndarray
    kind: str = "state"
    grid: TimeGrid | None = None

    def __post_init__(self):
        X = np.array(self.data, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise ShapeMismatch("snapshot matrix must be N x n_s with n_s >= 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("snapshots contain non-finite values")
        if self.kind not in ("state", "error"):
            raise ValueError(f"kind must be 'state' or 'error', got {self.kind!r}")
        X.setflags(write=False)
        object.__setattr__(self, "data", X)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def n_s(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_trajectory(cls, traj, kind="state"):
        return cls(traj.states.T, kind, traj.grid)


def _digest(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Basis:
    """Reduced basis ``V`` (``N x n``) with the weighting it was built for.

    ``source`` identifies the (snapshots, H) pair a POD basis came from, so
    hierarchical extensions can verify nesting. ``singular_values`` holds
    the full POD spectrum for POD bases.
    """

    V: np.ndarray
    H: np.ndarray
    modes: tuple[int, ...] = ()
    h_orthonormal: bool = False
    singular_values: np.ndarray | None = field(default=None, repr=False)
    source: str | None = None

    def __post_init__(self):
        V = np.array(self.V, dtype=float)
        if V.ndim == 1:
            V = V.reshape(-1, 1)
        V.setflags(write=False)
        object.__setattr__(self, "V", V)
        if not self.modes:
            object.__setattr__(self, "modes", tuple(range(V.shape[1])))

    @property
    def N(self) -> int:
        return self.V.shape[0]

    @property
    def n(self) -> int:
        return self.V.shape[1]

    def gram(self) -> np.ndarray:
        return self.V.T @ self.H @ self.V

    def prefix(self, k: int) -> "Basis":
        return Basis(self.V[:, :k], self.H, self.modes[:k], self.h_orthonormal,
                     self.singular_values, self.source)


def make_basis(V, sys: PHSystem, tol: float = 1e-10) -> Basis:
    """Wrap an arbitrary basis matrix, detecting H-orthonormality.

    Raises :class:`RankDeficient` if ``L^T V`` is numerically rank deficient.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V.reshape(-1, 1)
    if V.shape[0] != sys.N:
        raise ShapeMismatch(f"basis has {V.shape[0]} rows, system has N={sys.N}")
    s = np.linalg.svd(sys.L.T @ V, compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-12 * s[0]:
        raise RankDeficient("basis is not of full column rank")
    n = V.shape[1]
    ortho = np.linalg.norm(V.T @ sys.H @ V - np.eye(n), "fro") <= tol * np.sqrt(n)
    return Basis(V, sys.H, h_orthonormal=bool(ortho))


def _weighted_svd(snaps: SnapshotSet, sys: PHSystem):
    if snaps.N != sys.N:
        raise ShapeMismatch(f"snapshots have {snaps.N} rows, system has N={sys.N}")
    L = sys.L
    U, s, _ = np.linalg.svd(L.T @ snaps.data, full_matrices=False)
    # deterministic signs: largest-magnitude entry of each L^T V column positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs
    return U, s


def pod_state(snaps: SnapshotSet, sys: PHSystem, n: int) -> Basis:
    """Energy-weighted POD: the leading ``n`` modes of ``svd(L^T X_s)``.

    The returned ``V = L^{-T} U[:, :n]`` satisfies ``V^T H V = I``, and its
    columns are ordered by decreasing singular value.
    """
    if n < 1:
        raise ValueError("basis size must be positive")
    if n > min(snaps.N, snaps.n_s):
        raise RankDeficient(f"requested {n} modes from {snaps.n_s} snapshots of dimension {snaps.N}")
    U, s = _weighted_svd(snaps, sys)
    smax = s[0] if s.size else 0.0
    n_good = int(np.sum(s > SV_CUTOFF * smax)) if smax > 0 else 0
    if n_good < n:
        raise RankDeficient(f"only {n_good} singular values exceed {SV_CUTOFF:g} * sigma_max; {n} requested")
    V = sla.solve_triangular(sys.L.T, U[:, :n], lower=False)
    s = s.copy()
    s.setflags(write=False)
    return Basis(V, sys.H, tuple(range(n)), True, s, _digest(snaps.data, sys.H))


def extend_hierarchical(base: Basis, snaps: SnapshotSet, sys: PHSystem, n_H: int) -> Basis:
    """Extend a POD basis by further modes of the same snapshot set.

    The first ``base.n`` columns of the result are exactly ``base.V``.
    """
    if n_H <= base.n:
        raise ValueError(f"hierarchical size n_H={n_H} must exceed n={base.n}")
    if base.source is None or base.source != _digest(snaps.data, sys.H):
        raise NotNested("base basis was not produced by pod_state on these snapshots")
    full = pod_state(snaps, sys, n_H)
    if not np.array_equal(full.V[:, :base.n], base.V):
        drift = np.linalg.norm(full.V[:, :base.n] - base.V)
        if drift > 1e-10 * np.sqrt(base.n) * max(1.0, np.linalg.norm(base.V)):
            raise NotNested(f"POD prefix differs from base basis by {drift:.3e}")
    V = np.hstack([base.V, full.V[:, base.n:]])
    return Basis(V, sys.H, tuple(range(n_H)), True, full.singular_values, full.source)


def alp_basis_from_errors(err_snaps: SnapshotSet, sys: PHSystem, n_A: int) -> Basis:
    """POD of error snapshots; used as the ALP basis."""
    if err_snaps.kind != "error":
        raise ValueError("ALP basis requires error snapshots")
    return pod_state(err_snaps, sys, n_A)


def solve_fom(sys: PHSystem, u: InputSignal, grid: TimeGrid, solver: str = "auto",
              oracle_limit: int = ORACLE_LIMIT, with_midpoints: bool = False):
    """Full-order solve; ``"auto"`` picks the oracle when ``N <= oracle_limit``."""
    if solver == "auto":
        solver = "oracle" if sys.N <= oracle_limit else "midpoint"
    if solver == "oracle":
        return solve_expm_oracle(sys, u, grid, oracle_limit=oracle_limit, with_midpoints=with_midpoints)
    if solver == "midpoint":
        return solve_implicit_midpoint(GeneralizedLTI(np.eye(sys.N), sys.A, sys.B, sys.x0), u, grid)
    raise ValueError(f"unknown FOM solver {solver!r}")


def collect_error_snapshots(sys: PHSystem, rom, u: InputSignal, grid: TimeGrid,
                            fom_solver: str = "auto", scheme: str | None = None,
                            oracle_limit: int = ORACLE_LIMIT) -> SnapshotSet:
    """Columns ``e_i = x(t_i) - V x_r(t_i)`` from one FOM and one ROM run.

    The ROM is integrated with ``scheme``; by default the exponential scheme
    accompanies the oracle and implicit midpoint accompanies a midpoint FOM.
    """
    fom = solve_fom(sys, u, grid, fom_solver, oracle_limit)
    if scheme is None:
        scheme = "midpoint" if fom.scheme == "midpoint" else "exponential"
    red = solve(rom.lti(), u, grid, scheme)
    E = fom.states - red.states @ rom.basis.V.T
    return SnapshotSet(E.T, "error", grid)
