"""Discretization structure: node layout, M-matrix property, mirror
symmetry, traces, and first-order convergence of the trace ratio."""

import numpy as np
import pytest

from eppsvi.model import OscillatorParams, get_functional
from eppsvi.grid import (
    BoundaryConditionSpec,
    Field,
    INFLOW_BOT,
    INFLOW_TOP,
    JUNC_INT_BOT,
    JUNC_INT_TOP,
    JUNC_RAY_BOT,
    JUNC_RAY_TOP,
    RAY_MINUS,
    RAY_PLUS,
    STRIP,
    assemble_generator,
    build_grid,
    field_to_csv,
    local_zero,
    mirror_field,
    nonlocal_continuity,
    restrict_solve,
    solve_linear,
    trace,
)
from eppsvi.shortcycle import solve_short_cycle
from eppsvi.ergodic import invariant_measure


def test_default_grid_geometry(grid):
    assert (grid.Ny, grid.Nz, grid.L) == (241, 81, 6.0)
    assert np.isclose(grid.hy, 0.05) and np.isclose(grid.hz, 0.025)
    assert grid.ys[grid.mid] == 0.0
    assert grid.n_unknowns == 241 * 81 + 2


def test_grid_validation():
    p = OscillatorParams(1, 1, 1)
    with pytest.raises(ValueError):
        build_grid(p, Ny=240)  # even: y=0 would not be a node
    with pytest.raises(ValueError):
        build_grid(p, L=2.0)  # tighter than 3 sigma_y = 2.12
    build_grid(p, L=2.2, Ny=45, Nz=11)


def test_node_kind_counts(small_grid):
    g = small_grid
    kinds = g.kind
    half = (g.Ny - 1) // 2
    assert np.sum(kinds == STRIP) == g.Ny * (g.Nz - 2)
    for k in (RAY_PLUS, RAY_MINUS, INFLOW_TOP, INFLOW_BOT):
        assert np.sum(kinds == k) == half
    for k in (JUNC_INT_TOP, JUNC_INT_BOT, JUNC_RAY_TOP, JUNC_RAY_BOT):
        assert np.sum(kinds == k) == 1


def test_one_sided_junction_traces_are_distinct(small_grid):
    g = small_grid
    vals = np.arange(g.n_unknowns, dtype=float)
    f = Field(values=vals, grid=g)
    seen = {loc: trace(f, loc) for loc in
            ("(0-,Y)", "(0+,Y)", "(0+,-Y)", "(0-,-Y)")}
    assert len(set(seen.values())) == 4
    assert seen["(0-,Y)"] == g.idx(g.mid, g.Nz - 1)
    assert seen["(0+,Y)"] == g.idx_jrt
    assert seen["(0+,-Y)"] == g.idx(g.mid, 0)
    assert seen["(0-,-Y)"] == g.idx_jrb
    assert trace(f, "plus-ray").shape == ((g.Ny - 1) // 2,)
    assert trace(f, ("segment", 0.5)).shape == (g.Nz,)
    with pytest.raises(ValueError):
        trace(f, "(0,Y)")


def test_column_index(small_grid):
    g = small_grid
    assert g.ys[g.column_index(0.5)] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        g.column_index(0.51234)


def test_mirror_permutation_involution(small_grid):
    perm = small_grid.mirror_permutation()
    assert np.array_equal(perm[perm], np.arange(small_grid.n_unknowns))
    # mirror swaps the two ray-side junction unknowns
    assert perm[small_grid.idx_jrt] == small_grid.idx_jrb


def test_mirror_field_involution(small_grid):
    rng = np.random.default_rng(0)
    f = Field(values=rng.normal(size=small_grid.n_unknowns), grid=small_grid)
    assert np.array_equal(mirror_field(mirror_field(f)).values, f.values)


@pytest.mark.parametrize("bc,lam", [("local", 0.0), ("local", 0.5),
                                    ("nonlocal", 0.0), ("nonlocal", 1.0)])
def test_m_matrix(small_grid, bc, lam):
    """Positive diagonal, nonpositive off-diagonal for every lambda >= 0."""
    spec = local_zero() if bc == "local" else nonlocal_continuity()
    sysm = assemble_generator(small_grid, small_grid.params, lam, spec,
                              get_functional("one"))
    coo = sysm.matrix.tocoo()
    off = coo.data[coo.row != coo.col]
    diag = sysm.matrix.diagonal()
    assert np.all(diag > 0)
    assert np.all(off <= 1e-14)


def test_discrete_maximum_principle(small_grid):
    """(1 + A) u = 1 with zero junction data satisfies 0 <= u <= 1."""
    u = solve_short_cycle(get_functional("one"), 1.0, small_grid)
    assert u.values.min() >= -1e-12
    assert u.values.max() <= 1.0 + 1e-12


def test_neumann_truncation_rows_are_flat(small_grid):
    v = solve_short_cycle(get_functional("y2"), 0.0, small_grid)
    g = small_grid
    for j in range(g.Nz):
        assert v.values[g.idx(0, j)] == pytest.approx(v.values[g.idx(1, j)], abs=1e-11)
        assert v.values[g.idx(g.Ny - 1, j)] == pytest.approx(
            v.values[g.idx(g.Ny - 2, j)], abs=1e-11)


def test_solve_is_mirror_equivariant(small_grid):
    """Solving for the mirrored source equals mirroring the solution (the
    local-zero conditions are themselves mirror-symmetric)."""
    f = get_functional("y_plus_y2")
    v = solve_short_cycle(f, 0.0, small_grid)
    vm = solve_short_cycle(f.mirrored(), 0.0, small_grid)
    assert np.max(np.abs(mirror_field(v).values - vm.values)) < 1e-9


def test_solver_linearity(small_grid):
    vy = solve_short_cycle(get_functional("y"), 0.0, small_grid)
    vy2 = solve_short_cycle(get_functional("y2"), 0.0, small_grid)
    vsum = solve_short_cycle(get_functional("y_plus_y2"), 0.0, small_grid)
    assert np.max(np.abs(vy.values + vy2.values - vsum.values)) < 1e-9


def test_restrict_solve_consistency(small_grid):
    """Restricting to a sub-box while feeding the full solution on the
    complement reproduces the full solution on the sub-box."""
    g = small_grid
    sysm = assemble_generator(g, g.params, 0.5, local_zero(),
                              get_functional("z2"))
    full = solve_linear(sysm)
    keep = np.abs(g.node_y) <= 2.0
    keep[[g.idx_jrt, g.idx_jrb]] = False
    out = restrict_solve(sysm, keep, full.values)
    assert np.max(np.abs(out - full.values)) < 1e-9


def test_field_validation(small_grid):
    with pytest.raises(ValueError):
        Field(values=np.zeros(3), grid=small_grid)
    bad = np.zeros(small_grid.n_unknowns)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        Field(values=bad, grid=small_grid)


def test_bc_spec_validation():
    with pytest.raises(ValueError):
        BoundaryConditionSpec("weird")
    with pytest.raises(ValueError):
        BoundaryConditionSpec("dirichlet-ray")  # no data at all
    with pytest.raises(ValueError):
        BoundaryConditionSpec("dirichlet-ray", plus_data=1.0)  # minus open
    with pytest.raises(ValueError):
        BoundaryConditionSpec("dirichlet-segment")
    with pytest.raises(ValueError):
        BoundaryConditionSpec("local-zero", plus_data=1.0)


def test_field_to_csv_roundtrip(small_grid):
    rng = np.random.default_rng(1)
    f = Field(values=rng.normal(size=small_grid.n_unknowns), grid=small_grid)
    text = field_to_csv(f)
    lines = text.strip().split("\n")
    assert lines[0] == "y,z,region,value"
    assert len(lines) == small_grid.n_unknowns + 1
    # repr round-trips floats exactly
    got = np.array([float(line.split(",")[3]) for line in lines[1:]])
    order = list(range(small_grid.n_base)) + [small_grid.idx_jrt,
                                              small_grid.idx_jrb]
    assert np.array_equal(got, f.values[order])


def test_trace_ratio_first_order_convergence(params, grid):
    """The raw invariant-measure ratio converges at order >= 0.8 in h."""
    y2 = get_functional("y2")
    nus = []
    for ny, nz in ((121, 41), (241, 81), (481, 161)):
        g = grid if (ny, nz) == (241, 81) else build_grid(params, Ny=ny, Nz=nz)
        nus.append(invariant_measure(y2, g, richardson=False).nu)
    d1, d2 = nus[0] - nus[1], nus[1] - nus[2]
    order = np.log2(d1 / d2)
    assert order >= 0.8, f"observed order {order}"
