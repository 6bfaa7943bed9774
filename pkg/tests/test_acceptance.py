"""Acceptance gate: fourteen dual-oracle and property-based criteria at
desk scale (c0 = k = Y = 1, grid 241 x 81 on [-6, 6], L = 6).

Each criterion prints exactly one `[criterion NN] ...: PASS/FAIL (...)`
line before asserting.

Known red: criterion 11 compares the mean duration of a cycle started at
the junction (0, Y) between the PDE trace and Monte Carlo.  That duration
is a degenerate quantity: started exactly at the junction, the path
re-enters the plastic ray in arbitrarily short excursions (like Brownian
zero crossings), and the continuum limit of the mean duration is zero.
Both discretizations regularize it - the PDE trace decays like h^0.7
under grid refinement (1.82 -> 1.20 -> 0.75 -> 0.44) and the fixed-dt
simulation estimate decays as dt shrinks (1.50 at dt=1e-3, 1.25 at
dt=5e-4) - so the two scheme-dependent values cannot agree to a
statistical band at any fixed resolution.  Ratios of such traces (the
invariant measure) do converge, and criteria 1, 2 and 10 validate them
against Monte Carlo end-to-end.
"""

import json

import numpy as np
import pytest

from eppsvi import mc
from eppsvi.cli import run
from eppsvi.model import Functional, PhasePoint, get_functional, symmetrize
from eppsvi.grid import assemble_generator, nonlocal_continuity, trace
from eppsvi.shortcycle import (
    contraction_factor,
    default_overlap,
    phi_log_bound,
    phi_ray,
    phi_unit,
    solve_short_cycle,
    solve_short_cycle_decomposed,
)
from eppsvi.ergodic import (
    invariant_measure,
    probe_indices,
    solve_pi,
    solve_u_lambda_direct,
    solve_u_representation,
    u_lambda_by_formula,
)
from eppsvi.grid import build_grid

from oracles import phi_bvp_at


def report(num, name, ok, detail):
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")


# ------------------------------------------------------------- shared solves

@pytest.fixture(scope="module")
def nu_rich(grid, v_one):
    return {name: invariant_measure(get_functional(name), grid, v_one=v_one)
            for name in ("y2", "z2", "abs_y")}


@pytest.fixture(scope="module")
def pi_pair(grid):
    return solve_pi("+", 0.0, grid), solve_pi("-", 0.0, grid)


@pytest.fixture(scope="module")
def decomposed(grid):
    out = {}
    for name in ("one", "y2", "z2"):
        f = get_functional(name)
        mono = solve_short_cycle(f, 0.0, grid)
        dec, rep = solve_short_cycle_decomposed(f, grid)
        out[name] = (mono, dec, rep)
    return out


@pytest.fixture(scope="module")
def mc_timeavg(params):
    cfg = mc.SimConfig()  # dt=1e-3, horizon=2e4, burn-in 10%, 8 replicas, seed 0
    return {name: mc.estimate_time_average(get_functional(name), params, cfg)
            for name in ("y2", "z2", "abs_y")}


# ----------------------------------------------------------------- criteria

def test_criterion_01_normalization(grid, v_one):
    res = invariant_measure(get_functional("one"), grid, v_f=v_one, v_one=v_one)
    err = abs(res.nu - 1.0)
    ok = err <= 1e-12
    report(1, "normalization nu(1) = 1", ok, f"|nu-1| = {err:.2e} <= 1e-12")
    assert ok


def test_criterion_02_antisymmetric_annihilation(grid, v_one):
    vals = {}
    for name in ("y", "z"):
        vals[name] = invariant_measure(get_functional(name), grid,
                                       v_one=v_one).nu
    # The third requested functional, y z^3 + y^3, is NOT odd under the
    # mirror map (y z^3 is a degree-4 monomial, hence even): its measure is
    # genuinely nonzero, nu(y z^3) = 2 Y^3 * nu(y 1_{plus-ray}) > 0, and
    # Monte Carlo confirms the ~0.053 value.  The annihilation property is
    # therefore asserted on its odd part, which is what the property can
    # mean for a mixed functional.
    mixed = get_functional("yz3_plus_y3")
    literal = invariant_measure(mixed, grid, v_one=v_one).nu
    odd = invariant_measure(symmetrize(mixed).f_asym, grid, v_one=v_one).nu
    vals["asym(yz3+y3)"] = odd
    worst = max(abs(v) for v in vals.values())
    ok = worst <= 1e-8
    report(2, "antisymmetric f have nu(f) = 0", ok,
           f"max |nu| = {worst:.2e} <= 1e-8 over y, z, asym(yz3+y3); "
           f"literal nu(yz3+y3) = {literal:.4f} is nonzero because the "
           f"functional is not odd")
    assert ok


def test_criterion_03_pi_partition(pi_pair):
    pi_p, pi_m = pi_pair
    defect = float(np.max(np.abs(pi_p.values + pi_m.values - 1.0)))
    in_range = (pi_p.values.min() >= 0.0 and pi_p.values.max() <= 1.0
                and pi_m.values.min() >= 0.0 and pi_m.values.max() <= 1.0)
    ok = defect <= 1e-8 and in_range
    report(3, "pi+ + pi- = 1 with both in [0,1]", ok,
           f"sup defect = {defect:.2e} <= 1e-8, ranges in [0,1]: {in_range}")
    assert ok


def test_criterion_04_decomposition_equivalence(decomposed):
    sups = {name: float(np.max(np.abs(mono.values - dec.values)))
            for name, (mono, dec, _) in decomposed.items()}
    worst = max(sups.values())
    ok = worst <= 5e-8
    report(4, "monolithic vs interior/exterior decomposition", ok,
           "sup diff " + ", ".join(f"{n}: {s:.1e}" for n, s in sups.items())
           + " <= 5e-8")
    assert ok


def test_criterion_05_contraction_certificate(grid, decomposed):
    rho = contraction_factor(grid, *default_overlap(grid))
    rep = decomposed["one"][2]
    decays = all(b < a for a, b in zip(rep.residuals[:-1], rep.residuals[1:-1]))
    ok = rho < 1.0 and rep.measured_ratio <= rho + 0.05 and decays
    report(5, "certified contraction of the alternating iteration", ok,
           f"rho = {rho:.4f} < 1, measured ratio = {rep.measured_ratio:.4f} "
           f"<= rho + 0.05, residuals decay over {rep.iterations} sweeps")
    assert ok


def test_criterion_06_ray_profile_consistency(params):
    ys = np.linspace(0.05, 5.0, 100)
    one = get_functional("one")
    quad_vs_closed = max(abs(phi_ray(params, one, "+", y) - phi_unit(params, y))
                         for y in ys)
    bound_ok = all(phi_unit(params, y) <= float(phi_log_bound(params, y))
                   for y in ys)
    pts = np.array([0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0])
    oracle = phi_bvp_at(params, lambda y: np.ones_like(y), pts)
    bvp_err = max(abs(phi_ray(params, one, "+", y) - o)
                  for y, o in zip(pts, oracle))
    ok = quad_vs_closed <= 2e-9 and bound_ok and bvp_err <= 1e-6
    report(6, "ray-profile formulas vs independent 1-D solve", ok,
           f"double-quad vs closed form {quad_vs_closed:.1e} <= 2e-9 on 100 "
           f"points, log bound holds: {bound_ok}, vs BVP oracle "
           f"{bvp_err:.1e} <= 1e-6")
    assert ok


def test_criterion_07_resolvent_identity(grid):
    f = get_functional("y_plus_y2")
    sups, bounds = {}, []
    for lam in (1.0, 0.1, 0.01):
        pair = solve_u_lambda_direct(f, lam, grid)
        formula = u_lambda_by_formula(f, lam, grid)
        sups[lam] = float(np.max(np.abs(pair.u_lambda.values - formula.values)))
        bounds.append(pair.bound_ok)
    worst = max(sups.values())
    ok = worst <= 1e-7 and all(bounds)
    report(7, "resolvent: closed-form combination vs direct solve", ok,
           "sup diff " + ", ".join(f"lam={l}: {s:.1e}" for l, s in sups.items())
           + f" <= 1e-7, sup-norm bound holds: {all(bounds)}")
    assert ok


def test_criterion_08_resolvent_limit(grid, v_one):
    f = get_functional("y2")
    # the limit of lambda*u_lambda on a FIXED grid is that grid's own
    # trace ratio, so the comparison uses the plain (non-extrapolated) value
    nu = invariant_measure(f, grid, v_one=v_one, richardson=False).nu
    probes = probe_indices(grid)
    errs = []
    for lam in (1.0, 0.1, 0.01, 0.001):
        u = solve_u_lambda_direct(f, lam, grid).u_lambda
        errs.append([abs(lam * u.values[i] - nu) for i in probes])
    errs = np.array(errs)
    ok = bool(np.all(errs[1:] < errs[:-1]))
    report(8, "lambda u_lambda -> nu(f) monotonically at 5 probes", ok,
           f"max error along lam = 1, 0.1, 0.01, 0.001: "
           + " -> ".join(f"{e:.2e}" for e in errs.max(axis=1)))
    assert ok


def test_criterion_09_corrector(grid, v_one):
    f = Functional("y_plus_z2", lambda y, z, r: y + z * z, "general")
    u = solve_u_representation(f, grid, v_one=v_one)
    jump_top = abs(trace(u, "(0-,Y)") - trace(u, "(0+,Y)"))
    jump_bot = abs(trace(u, "(0+,-Y)") - trace(u, "(0-,-Y)"))
    nu = invariant_measure(f, grid, v_one=v_one, richardson=False).nu
    sysm = assemble_generator(grid, grid.params, 0.0, nonlocal_continuity(), f)
    resid = sysm.matrix @ u.values - (sysm.rhs - nu)
    box = [grid.idx(i, j) for i in range(grid.Ny) for j in range(1, grid.Nz - 1)
           if abs(grid.ys[i]) <= 2.0 and abs(grid.zs[j]) <= 0.8 * grid.params.Y]
    box_resid = float(np.max(np.abs(resid[box])))
    ok = box_resid <= 10.0 * grid.hy and max(jump_top, jump_bot) <= 1e-6
    report(9, "corrector solves Au = f - nu(f), continuous at junctions", ok,
           f"interior residual {box_resid:.1e} <= {10 * grid.hy:.2f}, "
           f"junction jumps {jump_top:.1e}, {jump_bot:.1e} <= 1e-6")
    assert ok


def test_criterion_10_dual_oracle_measure(params, nu_rich, mc_timeavg):
    lines, oks = [], []
    for name in ("y2", "z2", "abs_y"):
        pde = nu_rich[name].nu
        est, se = mc_timeavg[name]
        band = 2.0 * se + 5e-3
        oks.append(abs(pde - est) <= band)
        lines.append(f"{name}: |{pde:.4f} - {est:.4f}| <= {band:.4f}")
    # independent regenerative (cycle-ratio) estimator for y2
    ce = mc.estimate_cycle(get_functional("y2"), "plus", params,
                           mc.SimConfig(replicas=1024, seed=1))
    ratio = ce.integral / ce.duration
    se_ratio = abs(ratio) * np.hypot(ce.integral_stderr / ce.integral,
                                     ce.duration_stderr / ce.duration)
    band = 2.0 * se_ratio + 5e-3
    oks.append(abs(ratio - nu_rich["y2"].nu) <= band)
    oks.append(abs(ratio - mc_timeavg["y2"][0]) <= band)
    lines.append(f"cycle-ratio {ratio:.4f} +- {se_ratio:.4f} vs both")
    ok = all(oks)
    report(10, "PDE measure vs two Monte Carlo estimators", ok, "; ".join(lines))
    assert ok


def test_criterion_11_cycle_duration_oracle(params, v_one):
    pde = trace(v_one, "(0-,Y)")
    ce = mc.estimate_cycle(get_functional("one"), "plus", params,
                           mc.SimConfig(replicas=4096, seed=3))
    band = 2.0 * ce.duration_stderr + 5e-3
    diff = abs(ce.duration - pde)
    ok = diff <= band
    report(11, "mean junction-cycle duration, PDE vs MC", ok,
           f"PDE trace {pde:.4f} vs MC {ce.duration:.4f} "
           f"+- {ce.duration_stderr:.4f}, diff {diff:.4f} > band {band:.4f}; "
           f"the continuum value is 0 (degenerate at the junction), so both "
           f"numbers are resolution artifacts: PDE trace 1.82/1.20/0.75/0.44 "
           f"under successive h-halvings, MC 1.50 at dt=1e-3 vs 1.25 at "
           f"dt=5e-4")
    if not ok:
        pytest.fail(
            "expected red: the mean duration of a cycle started exactly at "
            "the junction (0, Y) has continuum value 0 - paths re-enter the "
            "plastic ray in arbitrarily short excursions, like Brownian "
            "zero crossings - so the PDE trace and the fixed-dt Monte Carlo "
            "value are two different regularizations of a degenerate "
            "quantity and cannot match to a statistical band "
            f"(diff {diff:.3f} > band {band:.3f}).  Only trace RATIOS "
            "converge, and those are validated by criteria 1, 2 and 10.")


def test_criterion_12_hitting_probability(params, grid, pi_pair):
    pi_p = pi_pair[0]
    cfg = mc.SimConfig(replicas=4096, seed=2)
    p0, se0 = mc.estimate_pi(PhasePoint(0.0, 0.0), params, cfg)
    center_ok = abs(p0 - 0.5) <= 2.0 * se0
    lines = [f"center {p0:.4f} +- {se0:.4f} vs 0.5"]
    oks = [center_ok]
    for y, z in ((0.7, 0.0), (0.0, 0.5)):
        phat, se = mc.estimate_pi(PhasePoint(y, z), params, cfg)
        i = grid.column_index(y)
        j = int(round((z + grid.params.Y) / grid.hz))
        field_val = float(pi_p.values[grid.idx(i, j)])
        band = 2.0 * se + 5e-3
        oks.append(abs(phat - field_val) <= band)
        lines.append(f"({y},{z}): MC {phat:.4f} vs field {field_val:.4f}, "
                     f"band {band:.4f}")
    ok = all(oks)
    report(12, "ray-hitting split vs direct simulation", ok, "; ".join(lines))
    assert ok


def test_criterion_13_robustness(params, grid, nu_rich):
    base = nu_rich["y2"].nu
    wide = build_grid(params, L=12.0, Ny=481, Nz=81)
    nu_wide = invariant_measure(get_functional("y2"), wide).nu
    l_change = abs(nu_wide - base)
    halved = build_grid(params, Ny=481, Nz=161)
    nu_halved = invariant_measure(get_functional("y2"), halved).nu
    h_change = abs(nu_halved - base)
    ok = l_change <= 1e-4 and h_change <= 1e-3
    report(13, "truncation and refinement stability of nu(y2)", ok,
           f"L 6 -> 12 changes nu by {l_change:.2e} <= 1e-4; halving "
           f"(hy, hz) changes it by {h_change:.2e} <= 1e-3")
    assert ok


def test_criterion_14_determinism(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"grid": {"Ny": 61, "Nz": 21},
                                    "sim": {"horizon": 20.0, "replicas": 2}}))
    outputs = []
    for _ in range(2):
        for argv in (["measure", "--config", str(cfg_path), "--f", "y2"],
                     ["simulate", "--config", str(cfg_path), "--estimator",
                      "timeavg", "--f", "y2", "--seed", "1"],
                     ["pi", "--config", str(cfg_path)]):
            assert run(argv) == 0
        outputs.append(capsys.readouterr().out)
    ok = outputs[0] == outputs[1]
    with capsys.disabled():
        report(14, "fixed-seed reruns are byte-identical", ok,
               f"{len(outputs[0])} bytes of reports compared")
    assert ok
