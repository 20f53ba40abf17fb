"""pH-preserving Petrov-Galerkin reduction with test space ``H V``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basisgen import Basis, make_basis
from .errors import RankDeficientBasis, ShapeMismatch, SingularGram, StructureLost
from .integrators import GeneralizedLTI
from .phcore import PHSystem

__all__ = [
    "ReducedPHSystem",
    "Projector",
    "reduce",
    "reduced_error_system",
    "lift",
    "reduced_coordinates",
    "apply_projector",
]

RED_TOL = 1e-10


def _as_basis(basis, sys: PHSystem) -> Basis:
    if isinstance(basis, Basis):
        if basis.N != sys.N:
            raise ShapeMismatch(f"basis has {basis.N} rows, system has N={sys.N}")
        return basis
    return make_basis(basis, sys)


@dataclass(frozen=True, eq=False)
class Projector:
    """``P = I - V (V^T H V)^{-1} V^T H``, applied without forming ``P``.

    ``gram_factor`` is the Cholesky factor of ``V^T H V``; it is ``None``
    for H-orthonormal bases, where the Gram matrix is the identity.
    """

    basis: Basis
    gram_factor: np.ndarray | None = None
    HV: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_basis(cls, basis: Basis) -> "Projector":
        HV = basis.H @ basis.V
        HV.setflags(write=False)
        if basis.h_orthonormal:
            return cls(basis, None, HV)
        try:
            Lg = np.linalg.cholesky(basis.V.T @ HV)
        except np.linalg.LinAlgError as exc:
            raise SingularGram("V^T H V is not positive definite") from exc
        return cls(basis, Lg, HV)

    def coefficients(self, X) -> np.ndarray:
        """``(V^T H V)^{-1} V^T H x`` for each row ``x`` of ``X``."""
        C = np.asarray(X) @ self.HV
        if self.gram_factor is None:
            return C
        return sla.cho_solve((self.gram_factor, True), C.T).T

    def apply(self, X) -> np.ndarray:
        """Project a state (1-D) or each row of a ``(k, N)`` array."""
        X = np.asarray(X, dtype=float)
        return X - self.coefficients(X) @ self.basis.V.T


def apply_projector(p: Projector, sys: PHSystem, x) -> np.ndarray:
    """Return ``x - V solve(V^T H V, V^T H x)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != sys.N:
        raise ShapeMismatch(f"x has trailing dimension {x.shape[-1]}, expected {sys.N}")
    return p.apply(x)


@dataclass(frozen=True, eq=False)
class ReducedPHSystem:
    """Reduced pH model ``E_r x_r' = (J_r - D_r) x_r + B_r w``.

    For the primal reduction ``w = u``; for the reduced error system the
    input is the full-order residual and ``B_r = V^T H`` (``n x N``).
    """

    E_r: np.ndarray
    J_r: np.ndarray
    D_r: np.ndarray
    B_r: np.ndarray
    xr0: np.ndarray
    basis: Basis
    parent: PHSystem = field(repr=False)
    kind: str = "primal"

    @property
    def n(self) -> int:
        return self.E_r.shape[0]

    @property
    def V(self) -> np.ndarray:
        return self.basis.V

    def lti(self, xr0=None) -> GeneralizedLTI:
        z0 = self.xr0 if xr0 is None else xr0
        return GeneralizedLTI(self.E_r, self.J_r - self.D_r, self.B_r, z0)

    def projector(self) -> Projector:
        return Projector.from_basis(self.basis)


def _assemble(sys: PHSystem, basis: Basis):
    V = basis.V
    if basis.n > sys.N:
        raise RankDeficientBasis(f"basis width {basis.n} exceeds N={sys.N}")
    s = np.linalg.svd(sys.L.T @ V, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise RankDeficientBasis("basis is not of full column rank")
    HV = sys.H @ V
    E_r = V.T @ HV
    J_r = HV.T @ sys.J @ HV
    D_r = HV.T @ sys.D @ HV
    for name, M, sign in (("E_r", E_r, -1.0), ("J_r", J_r, 1.0), ("D_r", D_r, -1.0)):
        defect = np.linalg.norm(M + sign * M.T, "fro")
        if defect > RED_TOL * max(1.0, np.linalg.norm(M, "fro")):
            raise StructureLost(f"assembled {name} violates its symmetry by {defect:.3e}")
    E_r = 0.5 * (E_r + E_r.T)
    J_r = 0.5 * (J_r - J_r.T)
    D_r = 0.5 * (D_r + D_r.T)
    lam = float(np.linalg.eigvalsh(D_r)[0])
    if lam < -RED_TOL * max(1.0, np.linalg.norm(D_r, 2)):
        raise StructureLost(f"reduced dissipation has lambda_min={lam:.3e}")
    try:
        np.linalg.cholesky(E_r)
    except np.linalg.LinAlgError as exc:
        raise StructureLost("reduced mass matrix V^T H V is not positive definite") from exc
    if basis.h_orthonormal and np.linalg.norm(E_r - np.eye(basis.n), "fro") > RED_TOL * np.sqrt(basis.n):
        raise StructureLost("basis flagged H-orthonormal but V^T H V != I")
    return HV, E_r, J_r, D_r


def _ro(*arrays):
    for a in arrays:
        a.setflags(write=False)


def reduce(sys: PHSystem, basis) -> ReducedPHSystem:
    """Project ``sys`` onto ``span(V)`` by left-multiplication with ``V^T H``.

    ``E_r = V^T H V``, ``J_r = V^T H J H V``, ``D_r = V^T H D H V``,
    ``B_r = V^T H B`` and ``x_r(t0) = V^T H x0``. The latter is the
    H-orthogonal projection of ``x0`` only when ``V`` is H-orthonormal.
    """
    basis = _as_basis(basis, sys)
    HV, E_r, J_r, D_r = _assemble(sys, basis)
    B_r = HV.T @ sys.B
    xr0 = HV.T @ sys.x0
    _ro(E_r, J_r, D_r, B_r, xr0)
    return ReducedPHSystem(E_r, J_r, D_r, B_r, xr0, basis, sys, "primal")


def reduced_error_system(sys: PHSystem, alp_basis, initial_error=None) -> ReducedPHSystem:
    """Reduce the error system ``e' = (J - D) H e + r`` onto ``span(V_A)``.

    The input port carries the full-order residual, so ``B_r = V_A^T H``.
    The reduced initial error is zero; pass ``initial_error`` to start from
    ``V_A^T H e(t0)`` instead.
    """
    basis = _as_basis(alp_basis, sys)
    HV, E_r, J_r, D_r = _assemble(sys, basis)
    B_r = np.ascontiguousarray(HV.T)
    if initial_error is None:
        xr0 = np.zeros(basis.n)
    else:
        xr0 = HV.T @ np.asarray(initial_error, dtype=float)
    _ro(E_r, J_r, D_r, B_r, xr0)
    return ReducedPHSystem(E_r, J_r, D_r, B_r, xr0, basis, sys, "error")


def lift(rom: ReducedPHSystem, xr) -> np.ndarray:
    """``V x_r`` for a reduced state or each row of a ``(k, n)`` array."""
    xr = np.asarray(xr, dtype=float)
    if xr.shape[-1] != rom.n:
        raise ShapeMismatch(f"reduced state has dimension {xr.shape[-1]}, expected {rom.n}")
    return xr @ rom.V.T


def reduced_coordinates(rom: ReducedPHSystem, x) -> np.ndarray:
    """Coordinates of the H-orthogonal projection of ``x`` onto ``span(V)``."""
    return rom.projector().coefficients(x)
