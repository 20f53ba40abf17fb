"""A-posteriori error bounds for pH-preserving reduced models.

Three bounds on ``||x(t) - V x_r(t)||_H`` are implemented:

``standard``
    ``int ||r(s)||_H ds`` with the primal residual ``r``. The exponential
    constant is 1 because the energy-logarithmic norm of ``(J - D) H``
    reduces to ``lambda_max(-L^T D L) <= 0``.
``alp``
    ``||V_A e_r(t)||_H + int ||r_A(s)||_H ds`` where ``e_r`` solves the error
    system reduced onto a second basis ``V_A``.
``hierarchical``
    ``||V_H x_H(t) - V x_r(t)||_H + int ||r_H(s)||_H ds`` with a finer ROM on
    ``V_H = [V V_+]``.

All residuals are evaluated in projected form ``P[(J - D) H x_hat + f]``,
so no time derivative of a discrete trajectory is needed.

Time discretization
-------------------
``scheme="exponential"`` (default) propagates every reduced system exactly
and integrates residual norms with Simpson's rule on grid points and
interval midpoints. ``scheme="midpoint"`` uses implicit midpoint for all
reduced solves and the midpoint rule for the integrals; the resulting
bounds are exact statements about the midpoint-discretized full model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basisgen import Basis, make_basis, solve_fom
from .errors import AllPointsSkipped, GridMismatch, NotPrefix, PreconditionUnmet, ShapeMismatch
from .integrators import (ORACLE_LIMIT, GeneralizedLTI, TimeGrid, Trajectory, integrate_series,
                          solve, solve_exponential, solve_implicit_midpoint)
from .phcore import InputSignal, PHSystem, energy_norms
from .projection import Projector, ReducedPHSystem, reduce, reduced_error_system

__all__ = [
    "BOUND_KINDS",
    "BoundSeries",
    "ResidualSeries",
    "LogNormConstant",
    "Prop1Report",
    "primal_residual_norms",
    "log_norm_constant",
    "standard_bound",
    "alp_bound",
    "hierarchical_bound",
    "true_error_series",
    "effectivity",
    "effectivity_floor",
    "certify_prop1",
]

BOUND_KINDS = ("standard", "alp", "hierarchical")
PROP1_TOL = 1e-8
FLOOR_FACTOR = 1e-14


@dataclass(frozen=True, eq=False)
class BoundSeries:
    """One scalar series on a grid: a bound, a true error or an effectivity.

    Effectivity series carry a ``retained`` mask; skipped points hold NaN.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)
    retained: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (len(self.grid),):
            raise ShapeMismatch(f"series has shape {v.shape}, grid has {len(self.grid)} points")
        check = v if self.retained is None else v[self.retained]
        if not np.all(np.isfinite(check)) or np.any(check < 0):
            raise ValueError(f"{self.kind} series must be finite and nonnegative")
        if self.kind == "standard" and self.metadata.get("kernel", "unit") == "unit":
            if np.any(np.diff(v) < 0):
                raise ValueError("standard bound must be nondecreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def max(self) -> float:
        return float(np.nanmax(self.values))


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    """Energy norms of a residual at grid points (and interval midpoints).

    ``rule`` is the quadrature applied by the bounds: ``"simpson"`` needs
    ``midpoint_norms``, ``"midpoint"`` uses only them, ``"trapezoid"``
    uses only the grid values.
    """

    grid: TimeGrid
    norms: np.ndarray
    which: str = "primal"
    midpoint_norms: np.ndarray | None = None
    rule: str = "trapezoid"

    def __post_init__(self):
        if self.rule not in ("trapezoid", "simpson", "midpoint"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.rule != "trapezoid" and self.midpoint_norms is None:
            raise ValueError(f"rule {self.rule!r} needs midpoint norms")
        for arr in (self.norms, self.midpoint_norms):
            if arr is not None and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
                raise ValueError("residual norms must be finite and nonnegative")

    def integral(self, rule: str | None = None, decay: float = 0.0) -> np.ndarray:
        return _integrate(self.grid, self.norms, self.midpoint_norms, rule or self.rule, decay)


@dataclass(frozen=True)
class LogNormConstant:
    """Exponential constant ``c_exp`` (always 1) and decay rate ``mu >= 0``."""

    c_exp: float
    decay_rate: float
    mode: str


def _rule_for(traj: Trajectory) -> str:
    if traj.midpoints is None:
        return "trapezoid"
    return "midpoint" if traj.scheme == "midpoint" else "simpson"


def _integrate(grid, f, fm, rule, decay=0.0):
    if decay < 0:
        raise ValueError("decay rate must be nonnegative")
    if decay == 0.0:
        if rule == "trapezoid":
            return integrate_series(grid, f)
        if rule == "simpson":
            return integrate_series(grid, f, fm)
        if rule == "midpoint":
            out = np.zeros(len(grid))
            np.cumsum(grid.dt * np.asarray(fm), out=out[1:])
            return out
        raise ValueError(f"unknown quadrature rule {rule!r}")
    # kernel exp(-mu (t_k - s)) carried along the grid
    dt = grid.dt
    q, qh = np.exp(-decay * dt), np.exp(-0.5 * decay * dt)
    if rule == "trapezoid":
        incr = 0.5 * dt * (q * f[:-1] + f[1:])
    elif rule == "simpson":
        incr = dt / 6.0 * (q * f[:-1] + 4.0 * qh * fm + f[1:])
    elif rule == "midpoint":
        incr = dt * qh * np.asarray(fm)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    out = np.zeros(len(grid))
    for k, inc in enumerate(incr):
        out[k + 1] = q * out[k] + inc
    return out


def _check_grid(u: InputSignal, grid: TimeGrid, sys: PHSystem):
    if u.m != sys.m:
        raise ShapeMismatch(f"input dimension {u.m} != port dimension {sys.m}")
    if not u.covers(grid.t0, grid.T):
        raise GridMismatch("input does not cover the evaluation grid")


def _residual_vectors(sys: PHSystem, P: Projector, states_full, U):
    """``P[(J - D) H x + B u]`` row-wise for lifted states ``x``."""
    return P.apply(states_full @ sys.A.T + U @ sys.B.T)


def _norm_pair(sys, R, Rm):
    return energy_norms(sys, R), (None if Rm is None else energy_norms(sys, Rm))


def _solve_reduced(rom: ReducedPHSystem, u, grid, scheme):
    return solve(rom.lti(), u, grid, scheme)


def _primal_residuals(sys, rom, rom_traj, u):
    grid = rom_traj.grid
    if rom_traj.dim != rom.n:
        raise GridMismatch(f"ROM trajectory has dimension {rom_traj.dim}, ROM has n={rom.n}")
    _check_grid(u, grid, sys)
    P = rom.projector()
    V = rom.V
    R = _residual_vectors(sys, P, rom_traj.states @ V.T, u.sample(grid.times))
    Rm = None
    if rom_traj.midpoints is not None:
        Rm = _residual_vectors(sys, P, rom_traj.midpoints @ V.T, u.sample(grid.midpoints))
    return R, Rm


# Operations ==================================================================
def primal_residual_norms(sys: PHSystem, rom: ReducedPHSystem, rom_traj: Trajectory,
                          u: InputSignal) -> ResidualSeries:
    """``||r(t_k)||_H`` with ``r = P[(J - D) H V x_r + B u]``.

    Midpoint samples of the trajectory, when present, are evaluated as well;
    the quadrature rule is chosen to match the scheme that produced them.
    """
    R, Rm = _primal_residuals(sys, rom, rom_traj, u)
    n, nm = _norm_pair(sys, R, Rm)
    return ResidualSeries(rom_traj.grid, n, "primal", nm, _rule_for(rom_traj))


def log_norm_constant(sys: PHSystem, mode: str = "unit") -> LogNormConstant:
    """Constant for ``||exp((J - D) H s)||_H <= c_exp * exp(-mu s)``.

    ``"unit"`` returns ``c_exp = 1`` and ``mu = 0``. ``"sharp"`` also
    reports ``mu = -lambda_max(-L^T D L) = lambda_min(L^T D L)``, the decay
    rate usable in the exponentially weighted residual integral.
    """
    if mode == "unit":
        return LogNormConstant(1.0, 0.0, mode)
    if mode == "sharp":
        L = sys.L
        S = L.T @ sys.D @ L
        mu = float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])
        return LogNormConstant(1.0, max(0.0, mu), mode)
    raise ValueError(f"unknown mode {mode!r}")


def standard_bound(res: ResidualSeries, kernel: str = "unit", mu: float = 0.0,
                   rule: str | None = None) -> BoundSeries:
    """Residual integral ``int_{t0}^{t_k} ||r||_H ds``.

    With ``kernel="decay"`` the integrand is weighted by ``exp(-mu (t_k - s))``.
    """
    if kernel == "unit":
        vals = res.integral(rule)
        mu = 0.0
    elif kernel == "decay":
        vals = res.integral(rule, decay=mu)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return BoundSeries(res.grid, vals, "standard",
                       {"kernel": kernel, "mu": mu, "rule": rule or res.rule, "exp_constant": 1.0})


def _alp_solve(sys, rom, alp_rom, u, grid, scheme):
    """Primal ROM and reduced error trajectories for the ALP bound."""
    n, nA = rom.n, alp_rom.n
    P = rom.projector()
    if scheme == "exponential":
        # joint system for (x_r, e_r) so the residual forcing is exact in time
        PAV = P.apply((sys.A @ rom.V).T).T
        PB = P.apply(sys.B.T).T
        M = np.zeros((n + nA, n + nA))
        M[:n, :n] = rom.E_r
        M[n:, n:] = alp_rom.E_r
        A = np.zeros_like(M)
        A[:n, :n] = rom.J_r - rom.D_r
        A[n:, :n] = alp_rom.B_r @ PAV
        A[n:, n:] = alp_rom.J_r - alp_rom.D_r
        G = np.vstack([rom.B_r, alp_rom.B_r @ PB])
        z0 = np.concatenate([rom.xr0, alp_rom.xr0])
        Z = solve_exponential(GeneralizedLTI(M, A, G, z0), u, grid)
        xr = Trajectory(grid, Z.states[:, :n], Z.midpoints[:, :n], "exponential")
        er = Trajectory(grid, Z.states[:, n:], Z.midpoints[:, n:], "exponential")
        return xr, er
    if scheme == "midpoint":
        xr = solve_implicit_midpoint(rom.lti(), u, grid)
        _, Rm = _primal_residuals(sys, rom, xr, u)
        er = solve_implicit_midpoint(alp_rom.lti(), Rm, grid)
        return xr, er
    raise ValueError(f"unknown scheme {scheme!r}")


def alp_bound(sys: PHSystem, rom: ReducedPHSystem, alp_rom: ReducedPHSystem,
              u: InputSignal, grid: TimeGrid, scheme: str = "exponential"):
    """ALP error bound ``||e_hat||_H + int ||r_A||_H``.

    Returns
    -------
    bound : BoundSeries
    components : dict
        ``approx_error_norm`` and ``alp_residual_integral`` as BoundSeries;
        their sum is ``bound``.
    """
    if alp_rom.kind != "error":
        raise ValueError("alp_rom must come from reduced_error_system")
    _check_grid(u, grid, sys)
    xr, er = _alp_solve(sys, rom, alp_rom, u, grid, scheme)
    R, Rm = _primal_residuals(sys, rom, xr, u)
    VA = alp_rom.V
    PA = alp_rom.projector()
    e_hat = er.states @ VA.T
    RA = PA.apply(e_hat @ sys.A.T + R)
    RAm = PA.apply((er.midpoints @ VA.T) @ sys.A.T + Rm)
    rule = _rule_for(er)
    c1 = energy_norms(sys, e_hat)
    c2 = _integrate(grid, energy_norms(sys, RA), energy_norms(sys, RAm), rule)
    meta = {"n": rom.n, "n_A": alp_rom.n, "scheme": scheme, "rule": rule, "exp_constant": 1.0}
    comps = {
        "approx_error_norm": BoundSeries(grid, c1, "component:approx_error_norm", meta),
        "alp_residual_integral": BoundSeries(grid, c2, "component:alp_residual_integral", meta),
    }
    return BoundSeries(grid, c1 + c2, "alp", meta), comps


def _check_prefix(rom, hier_rom):
    V, VH = rom.V, hier_rom.V
    if VH.shape[1] <= V.shape[1]:
        raise NotPrefix(f"hierarchical basis width {VH.shape[1]} must exceed n={V.shape[1]}")
    scale = max(1.0, float(np.max(np.abs(V))))
    if not np.allclose(VH[:, :V.shape[1]], V, rtol=0.0, atol=1e-13 * scale):
        raise NotPrefix("primal basis is not the leading block of the hierarchical basis")


def hierarchical_bound(sys: PHSystem, rom: ReducedPHSystem, hier_rom: ReducedPHSystem,
                       u: InputSignal, grid: TimeGrid, scheme: str = "exponential",
                       rom_traj: Trajectory | None = None):
    """Hierarchical bound ``||V_H x_H - V x_r||_H + int ||r_H||_H``.

    Returns the bound and the components ``state_difference_norm`` and
    ``hier_residual_integral``.
    """
    _check_prefix(rom, hier_rom)
    _check_grid(u, grid, sys)
    xr = rom_traj if rom_traj is not None else _solve_reduced(rom, u, grid, scheme)
    xh = _solve_reduced(hier_rom, u, grid, scheme)
    V, VH = rom.V, hier_rom.V
    PH = hier_rom.projector()
    X_H = xh.states @ VH.T
    RH = _residual_vectors(sys, PH, X_H, u.sample(grid.times))
    RHm = _residual_vectors(sys, PH, xh.midpoints @ VH.T, u.sample(grid.midpoints))
    rule = _rule_for(xh)
    c1 = energy_norms(sys, X_H - xr.states @ V.T)
    c2 = _integrate(grid, energy_norms(sys, RH), energy_norms(sys, RHm), rule)
    meta = {"n": rom.n, "n_H": hier_rom.n, "scheme": scheme, "rule": rule, "exp_constant": 1.0}
    comps = {
        "state_difference_norm": BoundSeries(grid, c1, "component:state_difference_norm", meta),
        "hier_residual_integral": BoundSeries(grid, c2, "component:hier_residual_integral", meta),
    }
    return BoundSeries(grid, c1 + c2, "hierarchical", meta), comps


def true_error_series(sys: PHSystem, rom: ReducedPHSystem, u: InputSignal, grid: TimeGrid,
                      fom_solver: str = "oracle", scheme: str | None = None,
                      rom_traj: Trajectory | None = None, fom_traj: Trajectory | None = None,
                      oracle_limit: int = ORACLE_LIMIT) -> BoundSeries:
    """``||x(t_k) - V x_r(t_k)||_H`` with ``x`` from the chosen full-order solver.

    The ROM uses ``scheme`` (exponential next to the oracle, midpoint next
    to a midpoint FOM, unless overridden).
    """
    if fom_traj is None:
        fom_traj = solve_fom(sys, u, grid, fom_solver, oracle_limit)
    if scheme is None:
        scheme = "midpoint" if fom_solver == "midpoint" else "exponential"
    if rom_traj is None:
        rom_traj = _solve_reduced(rom, u, grid, scheme)
    err = energy_norms(sys, fom_traj.states - rom_traj.states @ rom.V.T)
    return BoundSeries(grid, err, "true_error", {"fom_solver": fom_solver, "scheme": scheme})


def effectivity_floor(sys: PHSystem, fom_traj: Trajectory) -> float:
    """``1e-14 * max_k ||x(t_k)||_H``."""
    return FLOOR_FACTOR * float(np.max(energy_norms(sys, fom_traj.states)))


def effectivity(bound: BoundSeries, true_err: BoundSeries, floor: float):
    """Pointwise ``bound / ||e||_H`` where ``||e||_H >= floor``.

    Returns
    -------
    series : BoundSeries
        Effectivities; skipped points are NaN and excluded by ``retained``.
    max_effectivity : float
    """
    if bound.grid != true_err.grid:
        raise GridMismatch("bound and true error live on different grids")
    if not floor > 0:
        raise ValueError("floor must be positive")
    keep = true_err.values >= floor
    if not np.any(keep):
        raise AllPointsSkipped(f"every true-error value is below the floor {floor:.3e}")
    eff = np.full(len(bound.grid), np.nan)
    eff[keep] = bound.values[keep] / true_err.values[keep]
    meta = dict(bound.metadata)
    meta.update({"bound": bound.kind, "floor": floor, "skipped": np.flatnonzero(~keep).tolist()})
    series = BoundSeries(bound.grid, eff, "effectivity", meta, retained=keep)
    return series, float(np.max(eff[keep]))


# Equality of ALP and hierarchical bounds ======================================
@dataclass(frozen=True, eq=False)
class Prop1Report:
    """Outcome of comparing the ALP and hierarchical bounds on ``[V V_+]``.

    ``status`` is ``"certified"``, ``"violated"`` or ``"precondition_unmet"``.
    """

    grid: TimeGrid
    alp: BoundSeries
    hierarchical: BoundSeries
    deviation: np.ndarray
    max_abs_deviation: float
    relative_deviation: float
    properties: dict
    initial_condition_residual: float
    tol: float
    status: str

    @property
    def precondition_met(self) -> bool:
        return any(self.properties.values())

    def table(self, every: int = 1) -> str:
        rows = ["      t        alp_bound     hier_bound     |diff|"]
        for k in range(0, len(self.grid), every):
            rows.append(f"{self.grid.times[k]:10.5f}  {self.alp.values[k]:.6e}  "
                        f"{self.hierarchical.values[k]:.6e}  {self.deviation[k]:.3e}")
        return "\n".join(rows)


def certify_prop1(sys: PHSystem, V, V_plus, u: InputSignal, grid: TimeGrid,
                  prop1_tol: float = PROP1_TOL, scheme: str = "exponential") -> Prop1Report:
    """Run both improved bounds with ``V_A = V_H = [V V_+]`` and compare them.

    Three sufficient properties for the initial-value hypothesis are
    checked: ``[V V_+]`` H-orthonormal, ``x0 in span(V)`` and ``x0 = 0``.
    The reduced error system starts from ``V_A^T H e(t0)``, which vanishes
    whenever ``x0 in span(V)``.
    """
    V = V.V if isinstance(V, Basis) else np.asarray(V, dtype=float)
    V_plus = V_plus.V if isinstance(V_plus, Basis) else np.asarray(V_plus, dtype=float)
    if V_plus.ndim == 1:
        V_plus = V_plus.reshape(-1, 1)
    base = make_basis(V, sys)
    full = make_basis(np.hstack([V, V_plus]), sys)
    rom = reduce(sys, base)
    hier = reduce(sys, full)
    e0 = sys.x0 - rom.xr0 @ V.T
    alp = reduced_error_system(sys, full, initial_error=e0)

    x0_norm = float(energy_norms(sys, sys.x0)[0])
    in_span = float(energy_norms(sys, rom.projector().apply(sys.x0))[0]) <= 1e-10 * max(x0_norm, 1e-300)
    properties = {
        "secondary_h_orthonormal": full.h_orthonormal,
        "x0_in_span_V": bool(in_span),
        "x0_zero": bool(np.all(sys.x0 == 0.0)),
    }
    # the hypothesis itself: e_r(t0) = x_H(t0) - [x_r(t0); 0]
    ic_gap = alp.xr0 - (hier.xr0 - np.concatenate([rom.xr0, np.zeros(V_plus.shape[1])]))
    ic_res = float(np.linalg.norm(ic_gap))

    dA, _ = alp_bound(sys, rom, alp, u, grid, scheme)
    dH, _ = hierarchical_bound(sys, rom, hier, u, grid, scheme)
    dev = np.abs(dA.values - dH.values)
    max_abs = float(dev.max())
    scale = float(dA.values.max())
    rel = max_abs / scale if scale > 0 else (0.0 if max_abs == 0 else np.inf)
    if not any(properties.values()):
        status = "precondition_unmet"
        warnings.warn(f"no sufficient initial-condition property holds; measured relative "
                      f"deviation {rel:.3e} is reported only", PreconditionUnmet, stacklevel=2)
    else:
        status = "certified" if rel <= prop1_tol else "violated"
    return Prop1Report(grid, dA, dH, dev, max_abs, rel, properties, ic_res, prop1_tol, status)
