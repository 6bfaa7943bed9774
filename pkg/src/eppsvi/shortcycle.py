"""Short-cycle problems: ray profiles, the monolithic solve, and the
interior/exterior alternating decomposition with its contraction
certificate.

The short cycle v(y,z;f) solves A v = f on the strip and B+- v = f on
the rays, with the local conditions v(0+,Y) = 0 and v(0-,-Y) = 0.  It
decomposes as v = v_e + v+ + v-, where v_e carries the source with zero
ray data, and v+- carry the ray profiles phi+- as Dirichlet ray data.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad

from .model import Functional, OscillatorParams, INTERIOR, PLUS_RAY, MINUS_RAY
from .grid import (
    Grid,
    BoundaryConditionSpec,
    Field,
    LinearSystem,
    SolverError,
    assemble_generator,
    local_zero,
    solve_linear,
)


def _xi_cutoff(c0: float, kY: float) -> float:
    """Truncation of the semi-infinite xi-integral where the Gaussian
    weight drops below 1e-16 (c0 xi^2 + 2 kY xi = 37)."""
    return (-kY + np.sqrt(kY * kY + 37.0 * c0)) / c0


def phi_unit(params: OscillatorParams, y: float) -> float:
    """phi+(y;1) by the closed single-integral formula, abs tol 1e-10.

    phi+(y;1) = 2 int_0^inf exp(-(c0 xi^2 + 2kY xi))
                    (1 - exp(-2 c0 y xi)) / (2 c0 xi) dxi,
    the f = 1 reduction of the double-integral ray formula (checked against
    it and against an integrating-factor ODE solve; the asymptotic slope
    matches the logarithmic bound only with the leading factor 2).
    """
    if y < 0:
        raise ValueError(f"phi_unit requires y >= 0, got {y}")
    if y == 0:
        return 0.0
    c0, kY = params.c0, params.k * params.Y

    def integrand(xi):
        if xi == 0.0:
            return float(y)
        return np.exp(-(c0 * xi * xi + 2.0 * kY * xi)) * \
            (-np.expm1(-2.0 * c0 * y * xi)) / (2.0 * c0 * xi)

    val, _ = quad(integrand, 0.0, _xi_cutoff(c0, kY),
                  epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(2.0 * val)


def phi_ray(params: OscillatorParams, f: Functional, sign: str, y: float,
            tol: float = 1e-9) -> float:
    """Ray profile phi+-(y;f) by adaptive double quadrature.

    phi+(y;f) = 2 int_0^inf dxi exp(-(c0 xi^2 + 2kY xi))
                    int_xi^{xi+y} f(zeta, Y) exp(-2 c0 xi (zeta - xi)) dzeta
    for y >= 0; the minus profile is evaluated through the mirror identity
    phi-(y;f) = phi+(-y; zeta -> f(-zeta, -Y)).
    """
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    if sign == "+" and y < 0:
        raise ValueError(f"phi_ray('+') requires y >= 0, got {y}")
    if sign == "-" and y > 0:
        raise ValueError(f"phi_ray('-') requires y <= 0, got {y}")
    if y == 0:
        return 0.0
    if sign == "-":
        g = f.eval
        fm = Functional(f"mirror({f.name})",
                        lambda yy, zz, rr: g(-np.asarray(yy, float),
                                             -np.asarray(zz, float),
                                             -np.asarray(rr)),
                        bound=f.bound)
        return phi_ray(params, fm, "+", -y, tol)

    c0, Y = params.c0, params.Y
    kY = params.k * Y

    def inner(xi):
        def h(zeta):
            return float(f(zeta, Y, PLUS_RAY)) * np.exp(-2.0 * c0 * xi * (zeta - xi))
        val, _ = quad(h, xi, xi + y, epsabs=tol * 1e-3, epsrel=1e-12, limit=200)
        return val

    def outer(xi):
        return np.exp(-(c0 * xi * xi + 2.0 * kY * xi)) * inner(xi)

    val, _ = quad(outer, 0.0, _xi_cutoff(c0, kY),
                  epsabs=tol * 0.5, epsrel=1e-12, limit=200)
    return float(2.0 * val)


def phi_log_bound(params: OscillatorParams, y) -> np.ndarray:
    """Upper bound (1/c0) log((c0 y + kY)/(kY)) for phi+(y;1)."""
    c0, kY = params.c0, params.k * params.Y
    return np.log((c0 * np.asarray(y, float) + kY) / kY) / c0


@dataclass
class RayProfile:
    """Discrete ray profile phi+- at the grid's ray nodes (junction first)."""

    sign: str
    ys: np.ndarray        # y of each ray node, starting at 0
    values: np.ndarray    # phi values; values[0] = 0 at the junction
    grid: Grid

    def __post_init__(self):
        scale = max(1.0, float(np.max(np.abs(self.values))))
        if abs(self.values[0]) > 1e-12 * scale:
            raise ValueError("ray profile must vanish at the junction")
        self.values = self.values.copy()
        self.values[0] = 0.0

    def __call__(self, y):
        return np.interp(y, *self._sorted())

    def _sorted(self):
        order = np.argsort(self.ys)
        return self.ys[order], self.values[order]


def _ray_indices(grid: Grid, sign: str):
    if sign == "+":
        return [grid.idx_jrt] + [grid.idx(i, grid.Nz - 1)
                                 for i in range(grid.mid + 1, grid.Ny)]
    return [grid.idx_jrb] + [grid.idx(i, 0) for i in range(grid.mid - 1, -1, -1)]


def ray_profile(f: Functional, sign: str, grid: Grid, lam: float = 0.0,
                system: LinearSystem | None = None) -> RayProfile:
    """Solve the ray equation (lam + B+-) phi = f with phi = 0 at the
    junction, using exactly the monolithic ray stencil (the ray rows of the
    local-zero system form a closed subsystem)."""
    if system is None:
        system = assemble_generator(grid, grid.params, lam, local_zero(), f)
    idx = np.array(_ray_indices(grid, sign))
    import scipy.sparse.linalg as spla
    sub = system.matrix[idx][:, idx].tocsc()
    vals = spla.spsolve(sub, system.rhs[idx])
    if not np.all(np.isfinite(vals)):
        raise SolverError(f"ray profile solve failed for sign {sign}")
    return RayProfile(sign=sign, ys=grid.node_y[idx].copy(), values=vals, grid=grid)


def solve_short_cycle(f: Functional, lam: float, grid: Grid,
                      tol: float = 1e-10) -> Field:
    """Monolithic short-cycle solve with local-zero junction conditions.

    For lam = 0 this is the short cycle v(.,.;f); for lam > 0 the resolvent
    variant v_lambda.
    """
    system = assemble_generator(grid, grid.params, lam, local_zero(), f)
    return solve_linear(system, tol=tol, label=f"v(lam={lam};{f.name})")


def _phi_extension_vector(grid: Grid, prof: RayProfile) -> np.ndarray:
    """phi extended across the strip as a function of y alone: the discrete
    ray profile on its own side, and the C2 compactly-supported blend
    slope * y * exp(-(y/delta)^2), delta = sigma_y, on the other side."""
    delta = grid.params.sigma_y
    ys_sorted, vals_sorted = prof._sorted()
    hy = grid.hy
    if prof.sign == "+":
        slope = prof.values[1] / hy   # one-sided derivative at 0+
    else:
        slope = prof.values[1] / (-hy)
    y = grid.node_y
    own_side = y > 0 if prof.sign == "+" else y < 0
    out = np.where(own_side,
                   np.interp(y, ys_sorted, vals_sorted),
                   slope * y * np.exp(-((y / delta) ** 2)))
    out[y == 0.0] = 0.0
    return out


def solve_v_ray(f: Functional, sign: str, grid: Grid,
                tol: float = 1e-10) -> Field:
    """Solve the homogeneous problem carrying the ray profile phi+- as
    Dirichlet data on its ray (zero on the other), via the bounded-shift
    trick w = v - phi(y)."""
    prof = ray_profile(f, sign, grid, lam=0.0)
    phi_vec = _phi_extension_vector(grid, prof)
    data = prof  # callable, exact at the grid's ray nodes
    if sign == "+":
        bc = BoundaryConditionSpec("dirichlet-ray", plus_data=data, minus_data=0.0)
    else:
        bc = BoundaryConditionSpec("dirichlet-ray", plus_data=0.0, minus_data=data)
    system = assemble_generator(grid, grid.params, 0.0, bc, None)
    # shift rhs so the unknown w = v - phi stays bounded; v = phi + w is an
    # exact solution of the unshifted system
    rhs_w = system.rhs - system.matrix @ phi_vec
    w = solve_linear(system, tol=tol, rhs=rhs_w, label=f"w{sign}({f.name})")
    return Field(values=phi_vec + w.values, grid=grid, label=f"v{sign}({f.name})")


def default_overlap(grid: Grid) -> tuple[float, float]:
    """Default Schwarz overlap (ybar, ybar1) = (sigma_y, 2 sigma_y), snapped
    to grid columns."""
    s = grid.params.sigma_y
    hy = grid.hy
    ybar = round(s / hy) * hy
    ybar1 = round(2.0 * s / hy) * hy
    return ybar, ybar1


def _check_overlap(grid: Grid, ybar: float, ybar1: float):
    if not (0.0 < ybar < ybar1 < grid.L):
        raise ValueError(f"need 0 < ybar < ybar1 < L, got {ybar}, {ybar1}")
    if ybar1 - ybar < 2.0 * grid.hy - 1e-12:
        raise ValueError(
            f"overlap too thin: ybar1-ybar={ybar1 - ybar:.4g} < 2*hy={2 * grid.hy:.4g}")


def _segment_rows(grid: Grid, yval: float) -> np.ndarray:
    i = grid.column_index(yval)
    return np.array([grid.idx(i, j) for j in range(grid.Nz)])


def contraction_factor(grid: Grid, ybar: float, ybar1: float) -> float:
    """Certified Schwarz contraction bound: sup_z psi(ybar1, z) for the
    homogeneous exterior problem with psi = 1 on the segment y = ybar and
    psi = 0 on the ray.  Must be < 1; otherwise the discretization violates
    the maximum principle."""
    _check_overlap(grid, ybar, ybar1)

    def seg_data(z):
        return 0.0 if z == grid.params.Y else 1.0

    bc = BoundaryConditionSpec("dirichlet-segment", segments=[(ybar, seg_data)])
    system = assemble_generator(grid, grid.params, 0.0, bc, None)
    psi = solve_linear(system, label="psi")
    i1 = grid.column_index(ybar1)
    rho = float(max(psi.values[grid.idx(i1, j)] for j in range(1, grid.Nz - 1)))
    if rho >= 1.0:
        raise SolverError(
            f"contraction factor {rho} >= 1: discretization violates the "
            "maximum principle")
    return rho


@dataclass
class GammaIterationReport:
    """History of the alternating interior/exterior boundary-trace map."""

    residuals: list = dc_field(default_factory=list)
    iterates: list = dc_field(default_factory=list)
    measured_ratio: float = float("nan")
    rho: float = float("nan")
    converged: bool = False
    iterations: int = 0


def solve_ve(f: Functional, grid: Grid, ybar: float | None = None,
             ybar1: float | None = None, tol: float = 1e-9,
             max_iter: int = 200) -> tuple[Field, GammaIterationReport]:
    """Source part of the short cycle (zero ray data) by the alternating
    interior/exterior iteration.

    One sweep: solve the interior Dirichlet problem on (-ybar1, ybar1) with
    the current segment data Phi, pass the traces at y = +-ybar to the two
    exterior problems, and update Phi from the exterior traces at
    y = +-ybar1.  Stops when the sup change of Phi drops below ``tol``.
    """
    if ybar is None or ybar1 is None:
        d_ybar, d_ybar1 = default_overlap(grid)
        ybar = d_ybar if ybar is None else ybar
        ybar1 = d_ybar1 if ybar1 is None else ybar1
    _check_overlap(grid, ybar, ybar1)

    rows_p1 = _segment_rows(grid, ybar1)
    rows_m1 = _segment_rows(grid, -ybar1)
    rows_p = _segment_rows(grid, ybar)
    rows_m = _segment_rows(grid, -ybar)

    interior = assemble_generator(
        grid, grid.params, 0.0,
        BoundaryConditionSpec("dirichlet-segment",
                              segments=[(-ybar1, 0.0), (ybar1, 0.0)]), f)
    ext_plus = assemble_generator(
        grid, grid.params, 0.0,
        BoundaryConditionSpec("dirichlet-segment", segments=[(ybar, 0.0)]), f)
    ext_minus = assemble_generator(
        grid, grid.params, 0.0,
        BoundaryConditionSpec("dirichlet-segment", segments=[(-ybar, 0.0)]), f)

    phi_plus = np.zeros(grid.Nz)
    phi_minus = np.zeros(grid.Nz)
    report = GammaIterationReport(rho=contraction_factor(grid, ybar, ybar1))
    report.iterates.append((phi_plus.copy(), phi_minus.copy()))

    zeta = eta_p = eta_m = None
    for it in range(1, max_iter + 1):
        rhs = interior.rhs.copy()
        rhs[rows_p1] = phi_plus
        rhs[rows_m1] = phi_minus
        zeta = solve_linear(interior, rhs=rhs, label="zeta")

        rhs = ext_plus.rhs.copy()
        rhs[rows_p] = zeta.values[rows_p]
        eta_p = solve_linear(ext_plus, rhs=rhs, label="eta+")
        rhs = ext_minus.rhs.copy()
        rhs[rows_m] = zeta.values[rows_m]
        eta_m = solve_linear(ext_minus, rhs=rhs, label="eta-")

        new_plus = eta_p.values[rows_p1]
        new_minus = eta_m.values[rows_m1]
        resid = max(np.max(np.abs(new_plus - phi_plus)),
                    np.max(np.abs(new_minus - phi_minus)))
        phi_plus, phi_minus = new_plus.copy(), new_minus.copy()
        report.residuals.append(float(resid))
        report.iterates.append((phi_plus.copy(), phi_minus.copy()))
        report.iterations = it
        if resid <= tol:
            report.converged = True
            break

    ratios = [r2 / r1 for r1, r2 in zip(report.residuals, report.residuals[1:])
              if r1 > 10.0 * tol]
    if ratios:
        report.measured_ratio = float(np.exp(np.mean(np.log(ratios))))

    # glue: interior solution inside |y| <= ybar1, exterior solutions outside
    i_p1 = grid.column_index(ybar1)
    i_m1 = grid.column_index(-ybar1)
    values = zeta.values.copy()
    for i in range(i_p1 + 1, grid.Ny):
        for j in range(grid.Nz):
            values[grid.idx(i, j)] = eta_p.values[grid.idx(i, j)]
    for i in range(0, i_m1):
        for j in range(grid.Nz):
            values[grid.idx(i, j)] = eta_m.values[grid.idx(i, j)]
    glued = Field(values=values, grid=grid, label=f"v_e({f.name})")
    if not report.converged:
        err = SolverError(
            f"Gamma iteration did not converge in {max_iter} sweeps "
            f"(last residual {report.residuals[-1]:.3g})")
        err.report = report
        raise err
    return glued, report


def solve_short_cycle_decomposed(f: Functional, grid: Grid,
                                 ybar: float | None = None,
                                 ybar1: float | None = None,
                                 tol: float = 1e-9):
    """Short cycle via the decomposition v_e + v+ + v-."""
    ve, report = solve_ve(f, grid, ybar, ybar1, tol=tol)
    vp = solve_v_ray(f, "+", grid)
    vm = solve_v_ray(f, "-", grid)
    total = Field(values=ve.values + vp.values + vm.values, grid=grid,
                  label=f"v_dec({f.name})")
    return total, report
