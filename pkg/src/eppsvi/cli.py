"""Command-line surface: configuration, orchestration and reports.

Subcommands
    measure    invariant measure nu(f) via the short-cycle trace ratio
    cycle      short-cycle solve, monolithic and/or decomposed, with the
               alternating-iteration report
    resolvent  u_lambda by the direct nonlocal solve vs the closed-form
               combination, over a lambda sweep
    pi         ray-hitting split fields and their partition check
    simulate   Monte Carlo estimators (time average / cycle / hitting)
    compare    PDE vs MC table for a list of functionals
    certify    contraction-factor sweep over overlap choices
    sweep      grid / lambda / dt refinement studies

Reports are JSON with sorted keys (identical config + seeds reproduce
byte-identical output); field dumps are CSV with columns y,z,region,value.
Exit codes: 0 success, 2 usage, 3 validation failure, 4 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .model import OscillatorParams, PhasePoint, get_functional, FUNCTIONAL_NAMES
from .grid import SolverError, build_grid, field_to_csv, trace
from .shortcycle import (
    contraction_factor,
    default_overlap,
    solve_short_cycle,
    solve_short_cycle_decomposed,
    solve_ve,
)
from .ergodic import (
    invariant_measure,
    nu_lambda,
    probe_indices,
    solve_pi,
    solve_u_lambda_direct,
    solve_u_representation,
    u_lambda_by_formula,
)
from . import mc

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3, 4

_DEFAULTS = {
    "params": {"c0": 1.0, "k": 1.0, "Y": 1.0},
    "grid": {"L": 6.0, "Ny": 241, "Nz": 81, "tol": 1e-10},
    "sim": {"dt": 1e-3, "horizon": 2e4, "burn_in": 0.1, "replicas": 8,
            "seed": 0},
}

_KEY_TYPES = {
    ("params", "c0"): float, ("params", "k"): float, ("params", "Y"): float,
    ("grid", "L"): float, ("grid", "Ny"): int, ("grid", "Nz"): int,
    ("grid", "tol"): float,
    ("sim", "dt"): float, ("sim", "horizon"): float, ("sim", "burn_in"): float,
    ("sim", "replicas"): int, ("sim", "seed"): int,
}


class ConfigError(ValueError):
    pass


def load_config(path: str | None, overrides: dict) -> dict:
    """Defaults, deep-merged with the JSON config file, then overrides."""
    cfg = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") \
                from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        for sec, vals in raw.items():
            if sec not in cfg:
                raise ConfigError(f"unknown config section {sec!r}")
            if not isinstance(vals, dict):
                raise ConfigError(f"config section {sec!r} must be an object")
            for key, val in vals.items():
                if (sec, key) not in _KEY_TYPES:
                    raise ConfigError(f"unknown config key {sec}.{key}")
                cfg[sec][key] = val
    for (sec, key), val in overrides.items():
        if val is not None:
            cfg[sec][key] = val
    for (sec, key), typ in _KEY_TYPES.items():
        try:
            cfg[sec][key] = typ(cfg[sec][key])
        except (TypeError, ValueError):
            raise ConfigError(
                f"config key {sec}.{key} must be {typ.__name__}, "
                f"got {cfg[sec][key]!r}") from None
    return cfg


def config_hash(cfg: dict, extra: dict) -> str:
    canon = json.dumps({"config": cfg, "options": extra}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _params(cfg: dict) -> OscillatorParams:
    try:
        return OscillatorParams(**cfg["params"])
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None


def _grid(cfg: dict):
    g = cfg["grid"]
    try:
        return build_grid(_params(cfg), L=g["L"], Ny=g["Ny"], Nz=g["Nz"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _simconfig(cfg: dict, **kw) -> mc.SimConfig:
    s = cfg["sim"]
    try:
        return mc.SimConfig(dt=s["dt"], horizon=s["horizon"],
                            burn_in=s["burn_in"], replicas=s["replicas"],
                            seed=s["seed"], **kw)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None


def _functionals(spec: str):
    names = [n.strip() for n in spec.split(",") if n.strip()]
    if not names:
        raise ConfigError("no functional names given")
    try:
        return [get_functional(n) for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _grid_meta(grid) -> dict:
    return {"L": grid.L, "Ny": grid.Ny, "Nz": grid.Nz,
            "hy": grid.hy, "hz": grid.hz}


def _emit(report: dict, args, csv_fields: dict | None = None) -> None:
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if args.out_dir is not None:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{report['command']}.json").write_text(text)
        for name, field in (csv_fields or {}).items():
            (out / f"{name}.csv").write_text(field_to_csv(field))


def _base_report(command: str, cfg: dict, extra: dict) -> dict:
    return {"command": command, "version": __version__,
            "config": cfg, "config_hash": config_hash(cfg, extra)}


# ---------------------------------------------------------------- subcommands

def cmd_measure(args, cfg) -> int:
    grid = _grid(cfg)
    fs = _functionals(args.f)
    one = get_functional("one")
    v_one = solve_short_cycle(one, 0.0, grid)
    rows = {}
    csv_fields = {}
    for f in fs:
        res = invariant_measure(f, grid, v_one=v_one)
        rows[f.name] = {
            "nu": res.nu,
            "nu_base": res.nu_base,
            "nu_fine": res.nu_fine,
            "numerator_top": res.numerator_top,
            "numerator_bottom": res.numerator_bottom,
            "denominator": res.denominator,
            "method": res.method,
        }
        if args.dump_corrector:
            csv_fields[f"u_{f.name}"] = solve_u_representation(f, grid,
                                                               v_one=v_one)
    report = _base_report("measure", cfg, {"f": args.f})
    report["grid"] = _grid_meta(grid)
    report["measures"] = rows
    _emit(report, args, csv_fields)
    return EXIT_OK


def cmd_cycle(args, cfg) -> int:
    grid = _grid(cfg)
    (f,) = _functionals(args.f)
    report = _base_report("cycle", cfg, {"f": args.f, "lam": args.lam,
                                         "method": args.method})
    report["grid"] = _grid_meta(grid)
    csv_fields = {}
    if args.method in ("monolithic", "both"):
        v = solve_short_cycle(f, args.lam, grid)
        report["monolithic"] = {loc: trace(v, loc) for loc in
                                ("(0-,Y)", "(0+,Y)", "(0+,-Y)", "(0-,-Y)")}
        csv_fields[f"v_{f.name}"] = v
    if args.method in ("decomposed", "both"):
        if args.lam != 0.0:
            raise ConfigError("the decomposed route is a lambda=0 solve")
        vd, gamma = solve_short_cycle_decomposed(f, grid)
        report["decomposed"] = {loc: trace(vd, loc) for loc in
                                ("(0-,Y)", "(0+,Y)", "(0+,-Y)", "(0-,-Y)")}
        report["gamma"] = {
            "rho": gamma.rho,
            "iterations": gamma.iterations,
            "measured_ratio": gamma.measured_ratio,
            "converged": gamma.converged,
            "residuals": list(gamma.residuals),
        }
        csv_fields[f"v_decomposed_{f.name}"] = vd
    if args.method == "both":
        diff = float(np.max(np.abs(csv_fields[f"v_{f.name}"].values
                                   - csv_fields[f"v_decomposed_{f.name}"].values)))
        report["sup_difference"] = diff
    _emit(report, args, csv_fields if args.dump_fields else None)
    return EXIT_OK


def cmd_resolvent(args, cfg) -> int:
    grid = _grid(cfg)
    (f,) = _functionals(args.f)
    lams = [float(x) for x in args.lams.split(",") if x.strip()]
    if not lams or any(l <= 0 for l in lams):
        raise ConfigError("--lams must be positive reals")
    probes = probe_indices(grid)
    per_lam = {}
    for lam in lams:
        pair = solve_u_lambda_direct(f, lam, grid)
        formula = u_lambda_by_formula(f, lam, grid)
        per_lam[repr(lam)] = {
            "nu_lambda": pair.nu_lambda,
            "bound_ok": pair.bound_ok,
            "sup_formula_vs_direct": float(np.max(np.abs(
                pair.u_lambda.values - formula.values))),
            "lambda_u_at_probes": [float(lam * pair.u_lambda.values[i])
                                   for i in probes],
        }
    report = _base_report("resolvent", cfg, {"f": args.f, "lams": args.lams})
    report["grid"] = _grid_meta(grid)
    report["probe_points"] = [[float(grid.node_y[i]), float(grid.node_z[i])]
                              for i in probes]
    report["lambdas"] = per_lam
    _emit(report, args)
    return EXIT_OK


def cmd_pi(args, cfg) -> int:
    grid = _grid(cfg)
    pi_p = solve_pi("+", args.lam, grid)
    pi_m = solve_pi("-", args.lam, grid)
    report = _base_report("pi", cfg, {"lam": args.lam})
    report["grid"] = _grid_meta(grid)
    report["sup_partition_defect"] = float(np.max(np.abs(
        pi_p.values + pi_m.values - 1.0))) if args.lam == 0.0 else None
    report["range_pi_plus"] = [float(pi_p.values.min()), float(pi_p.values.max())]
    report["range_pi_minus"] = [float(pi_m.values.min()), float(pi_m.values.max())]
    report["traces"] = {
        "pi_plus(0-,Y)": trace(pi_p, "(0-,Y)"),
        "pi_plus(0+,-Y)": trace(pi_p, "(0+,-Y)"),
        "pi_minus(0-,Y)": trace(pi_m, "(0-,Y)"),
    }
    _emit(report, args, {"pi_plus": pi_p, "pi_minus": pi_m})
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    params = _params(cfg)
    simcfg = _simconfig(cfg)
    report = _base_report("simulate", cfg, {"estimator": args.estimator,
                                            "f": args.f, "start": args.start})
    if args.estimator == "timeavg":
        (f,) = _functionals(args.f)
        est, se = mc.estimate_time_average(f, params, simcfg)
        report["estimate"] = {"f": f.name, "value": est, "stderr": se,
                              "replicas": simcfg.replicas}
    elif args.estimator == "cycle":
        (f,) = _functionals(args.f)
        start = args.start
        if start not in ("plus", "minus"):
            y, z = (float(x) for x in start.split(","))
            start = PhasePoint(y, z)
        ce = mc.estimate_cycle(f, start, params, simcfg)
        report["estimate"] = {
            "f": f.name, "integral": ce.integral,
            "integral_stderr": ce.integral_stderr,
            "duration": ce.duration, "duration_stderr": ce.duration_stderr,
            "cycles": ce.cycles, "discarded": ce.discarded,
        }
    else:  # hitting probability
        y, z = (float(x) for x in args.start.split(","))
        p, se = mc.estimate_pi(PhasePoint(y, z), params, simcfg)
        report["estimate"] = {"p_plus": p, "stderr": se,
                              "replicas": simcfg.replicas}
    _emit(report, args)
    return EXIT_OK


def cmd_compare(args, cfg) -> int:
    grid = _grid(cfg)
    params = _params(cfg)
    simcfg = _simconfig(cfg)
    fs = _functionals(args.f)
    v_one = solve_short_cycle(get_functional("one"), 0.0, grid)
    rows = []
    for f in fs:
        pde = invariant_measure(f, grid, v_one=v_one).nu
        est, se = mc.estimate_time_average(f, params, simcfg)
        band = 2.0 * se + args.allowance
        rows.append({
            "f": f.name, "pde": pde, "mc": est, "stderr": se,
            "difference": abs(pde - est), "band": band,
            "pass": bool(abs(pde - est) <= band),
        })
    report = _base_report("compare", cfg, {"f": args.f,
                                           "allowance": args.allowance})
    report["grid"] = _grid_meta(grid)
    report["rows"] = rows
    _emit(report, args)
    sys.stdout.write("f          pde          mc           stderr      verdict\n")
    for r in rows:
        sys.stdout.write(f"{r['f']:<10} {r['pde']:<12.8f} {r['mc']:<12.8f} "
                         f"{r['stderr']:<11.2e} "
                         f"{'pass' if r['pass'] else 'FAIL'}\n")
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_SOLVER


def cmd_certify(args, cfg) -> int:
    grid = _grid(cfg)
    pairs = []
    if args.overlaps:
        for item in args.overlaps.split(";"):
            a, b = (float(x) for x in item.split(","))
            pairs.append((a, b))
    else:
        yb, yb1 = default_overlap(grid)
        pairs = [(yb, yb1), (yb, 2 * yb1 - yb), (2 * yb, 2 * yb1)]
    rows = []
    for yb, yb1 in pairs:
        try:
            rho = contraction_factor(grid, yb, yb1)
            rows.append({"ybar": yb, "ybar1": yb1, "rho": rho,
                         "certified": bool(rho < 1.0)})
        except ValueError as exc:
            rows.append({"ybar": yb, "ybar1": yb1, "error": str(exc)})
    report = _base_report("certify", cfg, {"overlaps": args.overlaps})
    report["grid"] = _grid_meta(grid)
    report["rows"] = rows
    _emit(report, args)
    return EXIT_OK


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot the sweep CSV written next to this script.\"\"\"
import csv, sys
from pathlib import Path
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open(Path(__file__).parent / "sweep.csv")))
xs = [float(r["x"]) for r in rows]
ys = [float(r["value"]) for r in rows]
plt.loglog(xs, ys, "o-") if min(xs) > 0 else plt.plot(xs, ys, "o-")
plt.xlabel(rows[0]["xlabel"] if rows else "x")
plt.ylabel("value")
plt.savefig(Path(__file__).parent / "sweep.png", dpi=150)
print("wrote sweep.png")
"""


def cmd_sweep(args, cfg) -> int:
    params = _params(cfg)
    (f,) = _functionals(args.f)
    rows = []
    if args.kind == "grid":
        g0 = cfg["grid"]
        ny, nz = g0["Ny"], g0["Nz"]
        for level in range(args.levels):
            grid = build_grid(params, L=g0["L"], Ny=ny, Nz=nz)
            res = invariant_measure(f, grid)
            rows.append({"x": grid.hy, "xlabel": "hy", "Ny": ny, "Nz": nz,
                         "value": res.nu})
            ny, nz = 2 * ny - 1, 2 * nz - 1
    elif args.kind == "lambda":
        grid = _grid(cfg)
        ref = invariant_measure(f, grid).nu
        lam = 1.0
        for _ in range(args.levels):
            val = nu_lambda(f, lam, grid)
            rows.append({"x": lam, "xlabel": "lambda", "value": val,
                         "abs_error_vs_nu": abs(val - ref)})
            lam /= 10.0
    elif args.kind == "dt":
        simcfg = _simconfig(cfg)
        dt = simcfg.dt
        for _ in range(args.levels):
            c = mc.SimConfig(dt=dt, horizon=simcfg.horizon,
                             burn_in=simcfg.burn_in,
                             replicas=simcfg.replicas, seed=simcfg.seed)
            est, se = mc.estimate_time_average(f, params, c)
            rows.append({"x": dt, "xlabel": "dt", "value": est, "stderr": se})
            dt /= 2.0
    else:
        raise ConfigError(f"unknown sweep kind {args.kind!r}")
    report = _base_report("sweep", cfg, {"kind": args.kind, "f": args.f,
                                         "levels": args.levels})
    report["rows"] = rows
    _emit(report, args)
    if args.out_dir is not None:
        out = Path(args.out_dir)
        cols = sorted({k for r in rows for k in r})
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join(repr(r.get(c, "")) if not isinstance(
                r.get(c, ""), str) else r.get(c, "") for c in cols))
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
        (out / "plot_sweep.py").write_text(_PLOT_SCRIPT)
    return EXIT_OK


# --------------------------------------------------------------------- driver

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="eppsvi",
        description="Invariant measure and ergodic correctors of the "
                    "elasto-perfectly-plastic oscillator.")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override sim.seed")
        p.add_argument("--out-dir", default=None,
                       help="directory for JSON/CSV artifacts")

    p = sub.add_parser("measure", help="invariant measure nu(f)")
    common(p)
    p.add_argument("--f", default="one",
                   help=f"comma list from: {', '.join(FUNCTIONAL_NAMES)}")
    p.add_argument("--dump-corrector", action="store_true")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("cycle", help="short-cycle solves")
    common(p)
    p.add_argument("--f", default="one")
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--method", choices=("monolithic", "decomposed", "both"),
                   default="both")
    p.add_argument("--dump-fields", action="store_true")
    p.set_defaults(func=cmd_cycle)

    p = sub.add_parser("resolvent", help="resolvent dual-method check")
    common(p)
    p.add_argument("--f", default="y_plus_y2")
    p.add_argument("--lams", default="1,0.1,0.01")
    p.set_defaults(func=cmd_resolvent)

    p = sub.add_parser("pi", help="ray-hitting split fields")
    common(p)
    p.add_argument("--lam", type=float, default=0.0)
    p.set_defaults(func=cmd_pi)

    p = sub.add_parser("simulate", help="Monte Carlo estimators")
    common(p)
    p.add_argument("--estimator", choices=("timeavg", "cycle", "hitting"),
                   default="timeavg")
    p.add_argument("--f", default="one")
    p.add_argument("--start", default="plus",
                   help="'plus', 'minus' or 'y,z'")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="PDE vs MC table")
    common(p)
    p.add_argument("--f", default="y2,z2,abs_y")
    p.add_argument("--allowance", type=float, default=5e-3,
                   help="discretization allowance added to 2*stderr")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("certify", help="contraction-factor sweep")
    common(p)
    p.add_argument("--overlaps", default=None,
                   help="semicolon list of 'ybar,ybar1' pairs")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="refinement studies")
    common(p)
    p.add_argument("--kind", choices=("grid", "lambda", "dt"), default="grid")
    p.add_argument("--f", default="y2")
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(func=cmd_sweep)
    return top


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {("sim", "seed"): args.seed}
    try:
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except ConfigError as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION
    except ValueError as exc:
        sys.stderr.write(f"validation error: {exc}\n")
        return EXIT_VALIDATION
    except SolverError as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
