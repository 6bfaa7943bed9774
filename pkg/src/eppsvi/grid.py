"""Finite-difference discretization of the strip-plus-rays phase space.

The strip interior carries the degenerate operator
    A u = -1/2 u_yy + (c0 y + k z) u_y - y u_z
and the two rays carry the one-dimensional operators
    B+- u = -1/2 u_yy + (c0 y +- k Y) u_y.

Discrete layout.  Base nodes are a regular (Ny x Nz) grid on
[-L, L] x [-Y, Y]; Ny is odd so y = 0 is a node.  Each line z = +-Y is
split by the sign of y: the outflow half hosts the ray operator, the
inflow half (z = Y with y < 0, z = -Y with y > 0) hosts the interior
equation with its upwind z-stencil pointing into the strip.  The two
junction points (0, Y) and (0, -Y) carry TWO unknowns each, so the
one-sided limits u(0-, Y), u(0+, Y), u(0+, -Y), u(0-, -Y) are distinct
addressable values: the base node holds the interior-side trace, an
extra unknown holds the ray-side trace.

Advection is discretized with first-order upwinding and diffusion with
centered differences, which makes every assembled operator an M-matrix
(positive diagonal, nonpositive off-diagonals) for every lambda >= 0.
The truncation at y = +-L is closed with a homogeneous Neumann row
(one-sided first difference set to zero); the drift is strongly inward
there so solutions are flat.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import (
    Functional,
    OscillatorParams,
    INTERIOR,
    PLUS_RAY,
    MINUS_RAY,
    region_name,
)

# node kinds
STRIP = 0          # strip interior, 0 < j < Nz-1
INFLOW_TOP = 1     # z = Y, y < 0: interior equation, one-sided z
INFLOW_BOT = 2     # z = -Y, y > 0
RAY_PLUS = 3       # z = Y, y > 0
RAY_MINUS = 4      # z = -Y, y < 0
JUNC_INT_TOP = 5   # trace u(0-, Y)
JUNC_INT_BOT = 6   # trace u(0+, -Y)
JUNC_RAY_TOP = 7   # trace u(0+, Y)
JUNC_RAY_BOT = 8   # trace u(0-, -Y)


class SolverError(RuntimeError):
    """Linear solve failed; carries the achieved residual when known."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class Grid:
    """Immutable discretization of the closure of D union D+ union D-."""

    def __init__(self, params: OscillatorParams, L: float, Ny: int, Nz: int):
        if Ny % 2 == 0 or Ny < 3:
            raise ValueError(f"Ny must be an odd integer >= 3 (y=0 must be a node), got {Ny}")
        if Nz < 3:
            raise ValueError(f"Nz must be >= 3, got {Nz}")
        if not L > 3.0 * params.sigma_y:
            raise ValueError(
                f"L={L} is too tight: need L > 3*sigma_y = {3.0 * params.sigma_y:.6g}"
            )
        self.params = params
        self.L = float(L)
        self.Ny = int(Ny)
        self.Nz = int(Nz)
        self.ys = np.linspace(-L, L, Ny)
        self.zs = np.linspace(-params.Y, params.Y, Nz)
        self.hy = 2.0 * L / (Ny - 1)
        self.hz = 2.0 * params.Y / (Nz - 1)
        self.mid = (Ny - 1) // 2
        self.ys[self.mid] = 0.0
        self.n_base = Ny * Nz
        self.n_unknowns = self.n_base + 2
        self.idx_jrt = self.n_base      # ray-side trace u(0+, Y)
        self.idx_jrb = self.n_base + 1  # ray-side trace u(0-, -Y)
        self._build_node_tables()

    def idx(self, i: int, j: int) -> int:
        return i * self.Nz + j

    def _build_node_tables(self):
        Ny, Nz, mid = self.Ny, self.Nz, self.mid
        kind = np.empty(self.n_unknowns, dtype=np.int8)
        node_y = np.empty(self.n_unknowns)
        node_z = np.empty(self.n_unknowns)
        region = np.empty(self.n_unknowns, dtype=np.int8)
        for i in range(Ny):
            for j in range(Nz):
                k = self.idx(i, j)
                node_y[k] = self.ys[i]
                node_z[k] = self.zs[j]
                if 0 < j < Nz - 1:
                    kind[k] = STRIP
                    region[k] = INTERIOR
                elif j == Nz - 1:
                    if i < mid:
                        kind[k] = INFLOW_TOP
                        region[k] = INTERIOR
                    elif i == mid:
                        kind[k] = JUNC_INT_TOP
                        region[k] = INTERIOR
                    else:
                        kind[k] = RAY_PLUS
                        region[k] = PLUS_RAY
                else:
                    if i > mid:
                        kind[k] = INFLOW_BOT
                        region[k] = INTERIOR
                    elif i == mid:
                        kind[k] = JUNC_INT_BOT
                        region[k] = INTERIOR
                    else:
                        kind[k] = RAY_MINUS
                        region[k] = MINUS_RAY
        kind[self.idx_jrt] = JUNC_RAY_TOP
        node_y[self.idx_jrt] = 0.0
        node_z[self.idx_jrt] = self.params.Y
        region[self.idx_jrt] = PLUS_RAY
        kind[self.idx_jrb] = JUNC_RAY_BOT
        node_y[self.idx_jrb] = 0.0
        node_z[self.idx_jrb] = -self.params.Y
        region[self.idx_jrb] = MINUS_RAY
        self.kind = kind
        self.node_y = node_y
        self.node_z = node_z
        self.node_region = region

    def eval_functional(self, f: Functional) -> np.ndarray:
        return np.asarray(f(self.node_y, self.node_z, self.node_region), dtype=float)

    def column_index(self, yval: float) -> int:
        """Index of the grid column nearest to yval (must be on the grid)."""
        i = int(round((yval + self.L) / self.hy))
        if not (0 <= i < self.Ny) or abs(self.ys[i] - yval) > 1e-9 * max(1.0, self.L):
            raise ValueError(f"y={yval} is not a grid column")
        return i

    def mirror_permutation(self) -> np.ndarray:
        """Permutation sending each unknown to its image under (y,z) -> (-y,-z)."""
        perm = np.empty(self.n_unknowns, dtype=np.int64)
        for i in range(self.Ny):
            for j in range(self.Nz):
                perm[self.idx(i, j)] = self.idx(self.Ny - 1 - i, self.Nz - 1 - j)
        perm[self.idx_jrt] = self.idx_jrb
        perm[self.idx_jrb] = self.idx_jrt
        return perm

    def __repr__(self):
        return (f"Grid(L={self.L}, Ny={self.Ny}, Nz={self.Nz}, "
                f"hy={self.hy:.4g}, hz={self.hz:.4g})")


def build_grid(params: OscillatorParams, L: float = 6.0, Ny: int = 241,
               Nz: int = 81) -> Grid:
    """Build the truncated-strip grid; rejects even Ny and too-tight L."""
    return Grid(params, L, Ny, Nz)


_BC_KINDS = ("local-zero", "nonlocal-continuity", "dirichlet-ray", "dirichlet-segment")


@dataclass(frozen=True)
class BoundaryConditionSpec:
    """Boundary treatment at the junctions, rays, and optional segments.

    kind:
      local-zero           u(0+,Y) = 0 and u(0-,-Y) = 0, ray equations active.
      nonlocal-continuity  values continuous across y=0 on each line z=+-Y.
      dirichlet-ray        prescribed data on D+ and/or D-; a ray without
                           data keeps its equation, with the scalar
                           ``plus_junction``/``minus_junction`` as its point
                           condition at the junction.
      dirichlet-segment    prescribed data on vertical segments y=const
                           (list of (y, data(z))); rays default to zero data.

    Ray data may be a scalar or a callable of y; segment data a scalar or a
    callable of z.
    """

    kind: str
    plus_data: object = None
    minus_data: object = None
    plus_junction: float | None = None
    minus_junction: float | None = None
    segments: Sequence[tuple] = ()

    def __post_init__(self):
        if self.kind not in _BC_KINDS:
            raise ValueError(f"unknown bc kind {self.kind!r}")
        if self.kind == "dirichlet-ray":
            if self.plus_data is None and self.minus_data is None:
                raise ValueError("dirichlet-ray needs data on at least one ray")
            if self.plus_data is None and self.plus_junction is None:
                raise ValueError("plus ray without data needs plus_junction")
            if self.minus_data is None and self.minus_junction is None:
                raise ValueError("minus ray without data needs minus_junction")
        elif self.kind == "dirichlet-segment":
            if not self.segments:
                raise ValueError("dirichlet-segment needs at least one segment")
        else:
            if (self.plus_data is not None or self.minus_data is not None
                    or self.segments):
                raise ValueError(f"bc kind {self.kind!r} takes no data")


def local_zero() -> BoundaryConditionSpec:
    return BoundaryConditionSpec("local-zero")


def nonlocal_continuity() -> BoundaryConditionSpec:
    return BoundaryConditionSpec("nonlocal-continuity")


@dataclass
class LinearSystem:
    """Assembled sparse operator with right-hand side, tied to its grid."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    grid: Grid
    label: str = ""
    _lu: object = dc_field(default=None, repr=False)

    def factor(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix.tocsc())
        return self._lu


@dataclass
class Field:
    """A scalar function sampled on the grid unknowns."""

    values: np.ndarray
    grid: Grid
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_unknowns,):
            raise ValueError("field size does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"field {self.label!r} contains non-finite values")


def _eval_data(data, arg):
    if callable(data):
        return float(data(arg))
    return float(data)


def assemble_generator(grid: Grid, params: OscillatorParams, lam: float,
                       bc: BoundaryConditionSpec,
                       f: Functional | None) -> LinearSystem:
    """Assemble lambda*id + (A on the strip, B+- on the rays) under ``bc``.

    ``f`` supplies the right-hand side at equation rows (None means 0).
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if params is not grid.params and params != grid.params:
        raise ValueError("params do not match the grid")
    Ny, Nz, mid = grid.Ny, grid.Nz, grid.mid
    hy, hz = grid.hy, grid.hz
    c0, k, Y = params.c0, params.k, params.Y
    n = grid.n_unknowns
    rhs_all = grid.eval_functional(f) if f is not None else np.zeros(n)

    rows, cols, vals = [], [], []
    rhs = np.zeros(n)

    def add(r, c, v):
        rows.append(r); cols.append(c); vals.append(v)

    plus_dirichlet = bc.kind == "dirichlet-segment" or (
        bc.kind == "dirichlet-ray" and bc.plus_data is not None)
    minus_dirichlet = bc.kind == "dirichlet-segment" or (
        bc.kind == "dirichlet-ray" and bc.minus_data is not None)
    plus_data = bc.plus_data if bc.plus_data is not None else 0.0
    minus_data = bc.minus_data if bc.minus_data is not None else 0.0

    seg_cols = {}
    for yval, data in bc.segments:
        seg_cols[grid.column_index(yval)] = data

    inv_hy2 = 1.0 / (hy * hy)

    def interior_row(r, i, j):
        y = grid.ys[i]
        z = grid.zs[j]
        diag = lam + inv_hy2
        add(r, grid.idx(i - 1, j), -0.5 * inv_hy2)
        add(r, grid.idx(i + 1, j), -0.5 * inv_hy2)
        a = c0 * y + k * z
        if a > 0:
            diag += a / hy
            add(r, grid.idx(i - 1, j), -a / hy)
        elif a < 0:
            diag += -a / hy
            add(r, grid.idx(i + 1, j), a / hy)
        c = -y
        if c > 0:
            diag += c / hz
            add(r, grid.idx(i, j - 1), -c / hz)
        elif c < 0:
            diag += -c / hz
            jj = j + 1
            # for y > 0 the node above row j = Nz-2 is the plus ray
            add(r, grid.idx(i, jj), c / hz)
        add(r, r, diag)
        rhs[r] = rhs_all[r]

    def ray_row(r, i, top):
        y = grid.ys[i]
        a = c0 * y + (k * Y if top else -k * Y)
        left = grid.idx(i - 1, Nz - 1) if top else grid.idx(i - 1, 0)
        right = grid.idx(i + 1, Nz - 1) if top else grid.idx(i + 1, 0)
        if top and i - 1 == mid:
            left = grid.idx_jrt
        if not top and i + 1 == mid:
            right = grid.idx_jrb
        diag = lam + inv_hy2
        add(r, left, -0.5 * inv_hy2)
        add(r, right, -0.5 * inv_hy2)
        if a > 0:
            diag += a / hy
            add(r, left, -a / hy)
        elif a < 0:
            diag += -a / hy
            add(r, right, a / hy)
        add(r, r, diag)
        rhs[r] = rhs_all[r]

    for i in range(Ny):
        in_segment = i in seg_cols
        for j in range(Nz):
            r = grid.idx(i, j)
            knd = grid.kind[r]
            if in_segment:
                add(r, r, 1.0)
                rhs[r] = _eval_data(seg_cols[i], grid.zs[j])
                continue
            if knd in (RAY_PLUS, RAY_MINUS):
                dirich = plus_dirichlet if knd == RAY_PLUS else minus_dirichlet
                if dirich:
                    data = plus_data if knd == RAY_PLUS else minus_data
                    add(r, r, 1.0)
                    rhs[r] = _eval_data(data, grid.ys[i])
                    continue
            if i == 0 or i == Ny - 1:
                # homogeneous Neumann closure at the truncation
                inward = grid.idx(1, j) if i == 0 else grid.idx(Ny - 2, j)
                add(r, r, 1.0)
                add(r, inward, -1.0)
                rhs[r] = 0.0
                continue
            if knd in (STRIP, INFLOW_TOP, INFLOW_BOT):
                interior_row(r, i, j)
            elif knd in (RAY_PLUS, RAY_MINUS):
                ray_row(r, i, knd == RAY_PLUS)
            elif knd == JUNC_INT_TOP:
                # full operator -1/2 d_yy + kY d_y at the one-sided limit
                # u(0-, Y); the z-transport vanishes (y=0).  The rightward
                # neighbour is the first ray node: a path crossing y=0 on
                # the line z=Y continues as a plastic phase, so the ray
                # value is the correct continuation (this keeps the cascade
                # of short plastic re-entries that dominates the junction)
                a = k * Y
                add(r, r, lam + 1.0 / hy**2 + a / hy)
                add(r, grid.idx(mid - 1, Nz - 1), -0.5 / hy**2 - a / hy)
                add(r, grid.idx(mid + 1, Nz - 1), -0.5 / hy**2)
                rhs[r] = rhs_all[r]
            elif knd == JUNC_INT_BOT:
                a = k * Y
                add(r, r, lam + 1.0 / hy**2 + a / hy)
                add(r, grid.idx(mid + 1, 0), -0.5 / hy**2 - a / hy)
                add(r, grid.idx(mid - 1, 0), -0.5 / hy**2)
                rhs[r] = rhs_all[r]

    # ray-side junction unknowns
    for r, top in ((grid.idx_jrt, True), (grid.idx_jrb, False)):
        other = grid.idx(mid, Nz - 1) if top else grid.idx(mid, 0)
        if bc.kind == "nonlocal-continuity":
            add(r, r, 1.0)
            add(r, other, -1.0)
            rhs[r] = 0.0
        elif bc.kind == "local-zero":
            add(r, r, 1.0)
            rhs[r] = 0.0
        elif bc.kind == "dirichlet-ray":
            dirich = plus_dirichlet if top else minus_dirichlet
            if dirich:
                data = plus_data if top else minus_data
                add(r, r, 1.0)
                rhs[r] = _eval_data(data, 0.0)
            else:
                jval = bc.plus_junction if top else bc.minus_junction
                add(r, r, 1.0)
                rhs[r] = float(jval)
        else:  # dirichlet-segment: rays carry (zero) data
            data = plus_data if top else minus_data
            add(r, r, 1.0)
            rhs[r] = _eval_data(data, 0.0)

    matrix = sp.csr_matrix(
        sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    )
    label = f"lam={lam},bc={bc.kind}" + (f",f={f.name}" if f is not None else "")
    return LinearSystem(matrix=matrix, rhs=rhs, grid=grid, label=label)


def solve_linear(system: LinearSystem, tol: float = 1e-10,
                 rhs: np.ndarray | None = None, label: str = "") -> Field:
    """Sparse direct solve with a residual-bound contract.

    Residual contract: ||Ax - b||_inf / max(1, ||b||_inf) <= tol, with one
    step of iterative refinement before giving up.
    """
    b = system.rhs if rhs is None else np.asarray(rhs, dtype=float)
    lu = system.factor()
    x = lu.solve(b)
    scale = max(1.0, np.max(np.abs(b)))

    def residual(xv):
        return np.max(np.abs(system.matrix @ xv - b)) / scale

    if not np.all(np.isfinite(x)):
        raise SolverError(f"solve produced non-finite values for {system.label!r}")
    res = residual(x)
    if res > tol:
        x = x + lu.solve(b - system.matrix @ x)
        res = residual(x)
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError(
            f"linear solve for {system.label!r} did not meet tol={tol:g} "
            f"(achieved residual {res:.3g})", residual=res)
    return Field(values=x, grid=system.grid, label=label or system.label)


_POINT_TRACES = {
    "(0-,Y)": lambda g: g.idx(g.mid, g.Nz - 1),
    "(0+,Y)": lambda g: g.idx_jrt,
    "(0+,-Y)": lambda g: g.idx(g.mid, 0),
    "(0-,-Y)": lambda g: g.idx_jrb,
}


def trace(field: Field, location):
    """One-sided junction value, ray values, or a vertical segment.

    ``location`` is one of the strings "(0-,Y)", "(0+,Y)", "(0+,-Y)",
    "(0-,-Y)", "plus-ray", "minus-ray", or a pair ("segment", y).
    """
    g = field.grid
    if isinstance(location, str):
        if location in _POINT_TRACES:
            return float(field.values[_POINT_TRACES[location](g)])
        if location == "plus-ray":
            return np.array([field.values[g.idx(i, g.Nz - 1)]
                             for i in range(g.mid + 1, g.Ny)])
        if location == "minus-ray":
            return np.array([field.values[g.idx(i, 0)]
                             for i in range(0, g.mid)])
    elif isinstance(location, tuple) and len(location) == 2 and location[0] == "segment":
        i = g.column_index(location[1])
        return field.values[[g.idx(i, j) for j in range(g.Nz)]].copy()
    raise ValueError(f"unknown trace location {location!r}")


def mirror_field(field: Field) -> Field:
    """The field transported by the mirror map (y,z) -> (-y,-z)."""
    perm = field.grid.mirror_permutation()
    out = np.empty_like(field.values)
    out[perm] = field.values
    return Field(values=out, grid=field.grid, label=f"mirror({field.label})")


def field_to_csv(field: Field) -> str:
    """CSV dump with the fixed column order y, z, region, value."""
    buf = io.StringIO()
    buf.write("y,z,region,value\n")
    g = field.grid
    order = list(range(g.n_base)) + [g.idx_jrt, g.idx_jrb]
    for kk in order:
        buf.write(f"{float(g.node_y[kk])!r},{float(g.node_z[kk])!r},"
                  f"{region_name(g.node_region[kk])},{float(field.values[kk])!r}\n")
    return buf.getvalue()


def restrict_solve(system: LinearSystem, keep: np.ndarray,
                   boundary_values: np.ndarray, tol: float = 1e-10,
                   label: str = "") -> np.ndarray:
    """Solve the restriction of ``system`` to the unknowns in ``keep``.

    Couplings from kept rows to dropped columns are moved to the right-hand
    side using ``boundary_values`` (a full-length vector; only dropped
    entries referenced by kept rows matter).  Returns a full-length vector
    holding the sub-solution on ``keep`` and ``boundary_values`` elsewhere.
    """
    keep = np.asarray(keep)
    if keep.dtype == bool:
        keep = np.flatnonzero(keep)
    mask = np.zeros(system.grid.n_unknowns, dtype=bool)
    mask[keep] = True
    drop = np.flatnonzero(~mask)
    A = system.matrix
    sub = A[keep][:, keep].tocsc()
    b = system.rhs[keep] - A[keep][:, drop] @ boundary_values[drop]
    x = spla.spsolve(sub, b)
    scale = max(1.0, np.max(np.abs(b))) if b.size else 1.0
    res = np.max(np.abs(sub @ x - b)) / scale if b.size else 0.0
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError(f"restricted solve {label!r} residual {res:.3g} > {tol:g}",
                          residual=res)
    out = boundary_values.copy()
    out[keep] = x
    return out
