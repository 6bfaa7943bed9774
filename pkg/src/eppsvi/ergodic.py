"""Invariant measure, hitting-split fields and ergodic correctors.

Everything here is a combination of short-cycle and harmonic solves on a
single grid:

    nu(f)    = (v(0-,Y;f) + v(0+,-Y;f)) / (2 v(0-,Y;1))
    u(.;f)   = v(.;f) - nu(f) v(.;1)
               + (pi+ - pi-) / (4 pi-(0-,Y)) * (v(0-,Y;f) - v(0+,-Y;f))

together with the resolvent u_lambda, solved both directly (continuity
coupling across the junctions) and by closed-form combinations of
local-condition solves, split by symmetry.

The denominator of nu uses the trace v(0-,Y;1); the mirror-equal trace
v(0+,-Y;1) is asserted equal at runtime (the local condition forces
v(0+,Y;1) = 0, so that one-sided value cannot normalize anything).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Functional, symmetrize, get_functional
from .grid import (
    Grid,
    BoundaryConditionSpec,
    Field,
    SolverError,
    assemble_generator,
    nonlocal_continuity,
    solve_linear,
    trace,
)
from .shortcycle import solve_short_cycle


def solve_pi(sign: str, lam: float, grid: Grid, tol: float = 1e-10) -> Field:
    """Hitting-split field pi+ or pi- (lam = 0), or its resolvent variant
    pi_lambda+- (lam > 0: ray equation with a unit point condition at the
    junction, zero on the opposite ray)."""
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    if lam == 0.0:
        if sign == "+":
            bc = BoundaryConditionSpec("dirichlet-ray", plus_data=1.0, minus_data=0.0)
        else:
            bc = BoundaryConditionSpec("dirichlet-ray", plus_data=0.0, minus_data=1.0)
    else:
        if sign == "+":
            bc = BoundaryConditionSpec("dirichlet-ray", minus_data=0.0,
                                       plus_junction=1.0)
        else:
            bc = BoundaryConditionSpec("dirichlet-ray", plus_data=0.0,
                                       minus_junction=1.0)
    system = assemble_generator(grid, grid.params, lam, bc, None)
    field = solve_linear(system, tol=tol, label=f"pi{sign}(lam={lam})")
    vals = field.values
    out_of_range = max(float(-vals.min()), float(vals.max() - 1.0))
    if out_of_range > 1e-9:
        raise SolverError(f"pi{sign} leaves [0,1] by {out_of_range:.3g}")
    # snap rounding-level overshoot so the [0,1] contract holds exactly
    np.clip(vals, 0.0, 1.0, out=vals)
    return field


@dataclass
class InvariantMeasureResult:
    nu: float
    numerator_top: float      # v(0-, Y; f), base grid
    numerator_bottom: float   # v(0+, -Y; f), base grid
    denominator: float        # v(0-, Y; 1), base grid
    grid: Grid
    method: str = "short-cycle-ratio"
    nu_base: float | None = None   # plain trace ratio on the base grid
    nu_fine: float | None = None   # trace ratio on the once-refined grid


def _cycle_traces(field: Field) -> tuple[float, float]:
    return trace(field, "(0-,Y)"), trace(field, "(0+,-Y)")


# refined grids and their unit short cycles, keyed by base-grid signature
_FINE_CACHE: dict = {}


def _grid_key(grid: Grid) -> tuple:
    p = grid.params
    return (p.c0, p.k, p.Y, grid.L, grid.Ny, grid.Nz)


def _fine_level(grid: Grid) -> tuple[Grid, Field]:
    key = _grid_key(grid)
    hit = _FINE_CACHE.get(key)
    if hit is None:
        from .grid import build_grid
        fine = build_grid(grid.params, L=grid.L, Ny=2 * grid.Ny - 1,
                          Nz=2 * grid.Nz - 1)
        hit = (fine, solve_short_cycle(get_functional("one"), 0.0, fine))
        _FINE_CACHE[key] = hit
    return hit


def _trace_ratio(v_f: Field, v_one: Field) -> tuple[float, float, float]:
    d_top, d_bot = _cycle_traces(v_one)
    if abs(d_top - d_bot) > 1e-10 * max(1.0, abs(d_top)):
        raise SolverError(
            f"mirror traces of the unit cycle disagree: {d_top} vs {d_bot}")
    if d_top <= 0:
        raise SolverError(
            f"unit cycle trace {d_top} <= 0: cycle length must be positive")
    n_top, n_bot = _cycle_traces(v_f)
    return (n_top + n_bot) / (2.0 * d_top), n_top, n_bot


def invariant_measure(f: Functional, grid: Grid,
                      v_f: Field | None = None,
                      v_one: Field | None = None,
                      richardson: bool = True) -> InvariantMeasureResult:
    """nu(f) from the short-cycle trace ratio.

    The scheme is first order, so by default the ratio is also computed on
    the once-refined grid and the two are Richardson-combined
    (2 nu_fine - nu_base); both plain ratios are recorded on the result.
    Pass ``richardson=False`` for the single-grid ratio (exact discrete
    identities, e.g. the corrector representation, live on one grid).

    Precomputed fields for f and for the constant functional may be passed
    to avoid repeated solves; they must live on the same grid.
    """
    if v_f is None:
        v_f = solve_short_cycle(f, 0.0, grid)
    if v_one is None:
        v_one = solve_short_cycle(get_functional("one"), 0.0, grid)
    if v_f.grid is not grid or v_one.grid is not grid:
        raise ValueError("fields must live on the target grid")
    nu_base, n_top, n_bot = _trace_ratio(v_f, v_one)
    d_top = trace(v_one, "(0-,Y)")
    if not richardson:
        return InvariantMeasureResult(
            nu=float(nu_base), numerator_top=n_top, numerator_bottom=n_bot,
            denominator=d_top, grid=grid, nu_base=float(nu_base))
    fine, v_one_fine = _fine_level(grid)
    v_f_fine = solve_short_cycle(f, 0.0, fine)
    nu_fine, _, _ = _trace_ratio(v_f_fine, v_one_fine)
    nu = 2.0 * nu_fine - nu_base
    return InvariantMeasureResult(
        nu=float(nu), numerator_top=n_top, numerator_bottom=n_bot,
        denominator=d_top, grid=grid,
        method="short-cycle-ratio-richardson",
        nu_base=float(nu_base), nu_fine=float(nu_fine))


def nu_lambda(f: Functional, lam: float, grid: Grid,
              v_f: Field | None = None, v_one: Field | None = None) -> float:
    """Resolvent-level measure nu_lambda(f) from v_lambda trace ratios."""
    if not lam > 0:
        raise ValueError(f"nu_lambda requires lambda > 0, got {lam}")
    if v_f is None:
        v_f = solve_short_cycle(f, lam, grid)
    if v_one is None:
        v_one = solve_short_cycle(get_functional("one"), lam, grid)
    n_top, n_bot = _cycle_traces(v_f)
    denom = trace(v_one, "(0-,Y)")
    if denom <= 0:
        raise SolverError(f"v_lambda(0-,Y;1) = {denom} <= 0")
    return float((n_top + n_bot) / (2.0 * denom))


@dataclass
class ResolventPair:
    lam: float
    u_lambda: Field
    nu_lambda: float
    bound_ok: bool = True  # sup |u_lambda| <= sup|f| / lambda + slack


def solve_u_lambda_direct(f: Functional, lam: float, grid: Grid,
                          tol: float = 1e-10) -> ResolventPair:
    """Resolvent solve with the nonlocal continuity conditions across the
    junctions; checks the contraction bound sup|u| <= sup|f|/lambda."""
    if not lam > 0:
        raise ValueError(f"resolvent requires lambda > 0, got {lam}")
    system = assemble_generator(grid, grid.params, lam, nonlocal_continuity(), f)
    u = solve_linear(system, tol=tol, label=f"u_lam(lam={lam};{f.name})")
    f_sup = float(np.max(np.abs(grid.eval_functional(f))))
    bound_ok = bool(np.max(np.abs(u.values)) <= f_sup / lam + 1e-8)
    nu_l = nu_lambda(f, lam, grid)
    return ResolventPair(lam=lam, u_lambda=u, nu_lambda=nu_l, bound_ok=bound_ok)


def u_lambda_by_formula(f: Functional, lam: float, grid: Grid) -> Field:
    """Resolvent by the closed-form combinations of local-condition solves.

    The symmetric part of f uses
        u = v_lam(.;f) + (v_lam(0-,Y;f)/v_lam(0-,Y;1)) (1/lam - v_lam(.;1))
    and the antisymmetric part uses
        u = v_lam(.;f) - (pi_lam+ - pi_lam-) v_lam(0+,-Y;f)
              / (1 - pi_lam+(0-,Y) + pi_lam+(0+,-Y)).
    """
    if not lam > 0:
        raise ValueError(f"resolvent requires lambda > 0, got {lam}")
    split = symmetrize(f)
    v_one = solve_short_cycle(get_functional("one"), lam, grid)

    v_s = solve_short_cycle(split.f_sym, lam, grid)
    denom_s = trace(v_one, "(0-,Y)")
    if abs(denom_s) < 1e-300:
        raise SolverError("v_lambda(0-,Y;1) vanished")
    c_sym = trace(v_s, "(0-,Y)") / denom_s
    u_vals = v_s.values + c_sym * (1.0 / lam - v_one.values)

    v_a = solve_short_cycle(split.f_asym, lam, grid)
    pi_p = solve_pi("+", lam, grid)
    pi_m = solve_pi("-", lam, grid)
    denom_a = 1.0 - trace(pi_p, "(0-,Y)") + trace(pi_p, "(0+,-Y)")
    if abs(denom_a) < 1e-12:
        raise SolverError(f"antisymmetric denominator {denom_a} ~ 0")
    u_vals = u_vals + v_a.values - (pi_p.values - pi_m.values) * (
        trace(v_a, "(0+,-Y)") / denom_a)
    return Field(values=u_vals, grid=grid, label=f"u_formula(lam={lam};{f.name})")


def solve_u_representation(f: Functional, grid: Grid,
                           v_f: Field | None = None,
                           v_one: Field | None = None,
                           pi_plus: Field | None = None,
                           pi_minus: Field | None = None) -> Field:
    """Ergodic corrector u(.;f) by the representation formula, combining
    the short cycles and the hitting split on one grid."""
    if v_f is None:
        v_f = solve_short_cycle(f, 0.0, grid)
    if v_one is None:
        v_one = solve_short_cycle(get_functional("one"), 0.0, grid)
    if pi_plus is None:
        pi_plus = solve_pi("+", 0.0, grid)
    if pi_minus is None:
        pi_minus = solve_pi("-", 0.0, grid)
    # the representation is an exact single-grid identity: use the plain
    # trace ratio on this grid, not the extrapolated measure
    res = invariant_measure(f, grid, v_f=v_f, v_one=v_one, richardson=False)
    pim_trace = trace(pi_minus, "(0-,Y)")
    if pim_trace <= 0:
        raise SolverError(f"pi-(0-,Y) = {pim_trace} <= 0")
    coeff = (res.numerator_top - res.numerator_bottom) / (4.0 * pim_trace)
    vals = v_f.values - res.nu * v_one.values + coeff * (
        pi_plus.values - pi_minus.values)
    return Field(values=vals, grid=grid, label=f"u({f.name})")


def probe_indices(grid: Grid) -> list[int]:
    """Grid indices of the five resolvent-limit probe points
    (0,0), (+-sigma_y, 0), (0, +-Y/2), snapped to nodes."""
    s = grid.params.sigma_y
    pts = [(0.0, 0.0), (s, 0.0), (-s, 0.0),
           (0.0, grid.params.Y / 2.0), (0.0, -grid.params.Y / 2.0)]
    out = []
    for y, z in pts:
        i = int(round((y + grid.L) / grid.hy))
        j = int(round((z + grid.params.Y) / grid.hz))
        i = min(max(i, 1), grid.Ny - 2)
        j = min(max(j, 1), grid.Nz - 2)
        out.append(grid.idx(i, j))
    return out
