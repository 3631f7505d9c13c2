"""Command-line front end: run / diagnose / sweep.

Configs are flat key-value text with dotted section keys, e.g.::

    plant = benchmark-sec6
    iterations = 1000
    params.lambda = 1.0
    params.gamma = 0.8, 0.14, 0.06
    uncertainty.mode = bounded-random

``--config`` accepts either a bundled preset name or a file path. Exit
codes: 0 success, 2 config/validation error or missing artifacts, 3
divergence; diagnose exits 1 when a check fails.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob
import os
import sys

import numpy as np

from .controller import LearningParams
from .diagnostics import analyze_run, check_selection, write_diagnostics_csv
from .engine import RunConfig, RunHistory, run, summary_line, write_outputs
from .errors import AdaptiveIlcError, ConfigError, NonFiniteOutput
from .plant import UncertaintyModel, estimate_partial_bounds, make_plant

PRESETS = {
    "sec6-nominal": """\
plant = benchmark-sec6
reference = sec6
iterations = 1000
seed = 0
u0 = 0.0
initial_estimate = 0.9
diagnostics = true
record_history = true
params.lambda = 1.0
params.gamma = 0.8, 0.14, 0.06
params.epsilon = 0.01
params.mu1 = 1.0
params.mu2 = 0.001
uncertainty.mode = none
""",
    "sec6-robust": """\
plant = benchmark-sec6
reference = sec6
iterations = 1000
seed = 0
u0 = 0.0
initial_estimate = 0.9
diagnostics = true
record_history = true
params.lambda = 1.0
params.gamma = 0.8, 0.14, 0.06
params.epsilon = 0.01
params.mu1 = 1.0
params.mu2 = 0.001
uncertainty.mode = bounded-random
uncertainty.beta_w = 0.01
uncertainty.beta_delta = 0.01
""",
    "sec6-first-order": """\
plant = benchmark-sec6
reference = sec6
iterations = 1000
seed = 0
u0 = 0.0
initial_estimate = 0.9
diagnostics = true
record_history = true
params.lambda = 1.0
params.gamma = 0.8
params.epsilon = 0.01
params.mu1 = 1.0
params.mu2 = 0.001
uncertainty.mode = none
""",
}

_KNOWN_KEYS = {
    "plant", "reference", "horizon", "iterations", "seed", "u0",
    "initial_estimate", "clamp", "diagnostics", "diagnostics_nodes", "snapshots",
    "record_history",
    "params.lambda", "params.gamma", "params.epsilon", "params.mu1", "params.mu2",
    "uncertainty.mode", "uncertainty.beta_w", "uncertainty.beta_delta",
    "uncertainty.rho",
}


def parse_config_text(text) -> dict:
    kv = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {ln}: unknown key '{key}'")
        kv[key] = value.strip()
    return kv


def load_config(spec: str) -> dict:
    """Resolve a preset name or config file path into a key-value dict."""
    if spec in PRESETS:
        return parse_config_text(PRESETS[spec])
    if not os.path.exists(spec):
        raise ConfigError(f"config: no preset or file named '{spec}'")
    with open(spec) as fh:
        return parse_config_text(fh.read())


def _parse_float(kv, key, default):
    try:
        return float(kv[key]) if key in kv else default
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {kv[key]!r}") from exc


def _parse_int(kv, key, default):
    try:
        return int(kv[key]) if key in kv else default
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {kv[key]!r}") from exc


def _parse_bool(kv, key, default):
    if key not in kv:
        return default
    v = kv[key].lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {kv[key]!r}")


def _parse_list(kv, key):
    if key not in kv or not kv[key]:
        return None
    try:
        return [float(x) for x in kv[key].split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key}: not a comma list of numbers: {kv[key]!r}") from exc


def build_run_config(kv: dict) -> RunConfig:
    plant_name = kv.get("plant", "benchmark-sec6")
    horizon = _parse_int(kv, "horizon", None) if "horizon" in kv else None
    plant = make_plant(plant_name, horizon=horizon)

    gamma = _parse_list(kv, "params.gamma")
    if not gamma:
        raise ConfigError("params.gamma: at least one gain required")
    params = LearningParams(
        lam=_parse_float(kv, "params.lambda", 1.0),
        gains=tuple(gamma),
        epsilon=_parse_float(kv, "params.epsilon", 0.01),
        mu1=_parse_float(kv, "params.mu1", 1.0),
        mu2=_parse_float(kv, "params.mu2", 0.001),
        horizon=plant.horizon,
    )
    uncertainty = UncertaintyModel(
        mode=kv.get("uncertainty.mode", "none"),
        beta_w=_parse_float(kv, "uncertainty.beta_w", 0.0),
        beta_delta=_parse_float(kv, "uncertainty.beta_delta", 0.0),
        rho=_parse_float(kv, "uncertainty.rho", 0.99),
    )
    u0 = _parse_list(kv, "u0") if "," in kv.get("u0", "") else None
    snapshots = _parse_list(kv, "snapshots")
    return RunConfig(
        params=params,
        uncertainty=uncertainty,
        plant=plant_name,
        reference=kv.get("reference", "sec6"),
        iterations=_parse_int(kv, "iterations", 1000),
        u0=np.asarray(u0) if u0 is not None else _parse_float(kv, "u0", 0.0),
        initial_estimate=_parse_float(kv, "initial_estimate", 0.9),
        seed=_parse_int(kv, "seed", 0),
        horizon=horizon,
        clamp=_parse_float(kv, "clamp", None) if "clamp" in kv else None,
        diagnostics=_parse_bool(kv, "diagnostics", True),
        diagnostics_nodes=_parse_int(kv, "diagnostics_nodes", 17),
        snapshots=tuple(int(s) for s in snapshots) if snapshots else None,
        record_history=_parse_bool(kv, "record_history", True),
    )


def write_config_echo(kv: dict, path):
    lines = [f"{k} = {kv[k]}" for k in sorted(kv)]
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _apply_overrides(kv: dict, args) -> dict:
    kv = dict(kv)
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    if args.iterations is not None:
        kv["iterations"] = str(args.iterations)
    if args.no_diagnostics:
        kv["diagnostics"] = "false"
    if args.snapshots is not None:
        kv["snapshots"] = args.snapshots
    return kv


def cmd_run(args) -> int:
    try:
        kv = _apply_overrides(load_config(args.config), args)
        config = build_run_config(kv)
    except AdaptiveIlcError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = args.out or f"{os.path.basename(args.config)}-out"
    try:
        record = run(config)
    except NonFiniteOutput as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    os.makedirs(outdir, exist_ok=True)
    write_outputs(record, outdir)
    write_config_echo(kv, os.path.join(outdir, "config.cfg"))
    print(f"{args.config}: {summary_line(record)}")
    return 0


def cmd_diagnose(args) -> int:
    run_dir = args.run_dir
    cfg_path = os.path.join(run_dir, "config.cfg")
    hist_path = os.path.join(run_dir, "history.npz")
    if not os.path.exists(cfg_path):
        print(f"missing artifacts: {cfg_path} not found", file=sys.stderr)
        return 2
    if not os.path.exists(hist_path):
        print("missing artifacts: oracle snapshots required "
              f"({hist_path} not found; run with record_history = true)", file=sys.stderr)
        return 2
    try:
        kv = parse_config_text(open(cfg_path).read())
        config = build_run_config(kv)
    except AdaptiveIlcError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    history = RunHistory.load(hist_path)
    plant = make_plant(config.plant, horizon=config.horizon)
    report = analyze_run(plant, config.params, history)
    outdir = args.out or run_dir
    os.makedirs(outdir, exist_ok=True)
    write_diagnostics_csv(report, os.path.join(outdir, "diagnostics.csv"))

    tol = args.tol
    ok_e = report.max_err_e <= tol
    ok_u = report.max_err_u <= tol
    ok_l6 = report.lemma6_holds()
    mode = "robust" if report.robust else "nominal"
    print(f"mode: {mode}")
    print(f"error-recursion consistency: max rel err = {report.max_err_e:.3e} "
          f"(tol {tol:.1e}) -> {'PASS' if ok_e else 'FAIL'}")
    print(f"input-recursion consistency: max rel err = {report.max_err_u:.3e} "
          f"(tol {tol:.1e}) -> {'PASS' if ok_u else 'FAIL'}")
    print(f"contraction-bound implication: zeta_max = {np.nanmax(report.zeta):.6f} "
          f"<= zeta_bar = {report.zeta_bar:.6f}, phi_max = {np.nanmax(report.phi):.6f} "
          f"<= phi_bar = {report.phi_bar:.6f} -> {'PASS' if ok_l6 else 'FAIL'}")
    sel, sel_ap = report.selection_empirical, report.selection_apriori
    print(f"selection check (empirical estimate bound {report.beta_est_empirical:.3f}): "
          f"cond_a={sel.cond_a} cond_b={sel.cond_b} margin={sel.margin:.6f}")
    print(f"selection check (a priori estimate bound {report.apriori_bound_empirical:.1f}): "
          f"cond_b={sel_ap.cond_b} margin={sel_ap.margin:.1f}"
          + (" (conservative bound violates the condition; empirical bound is the "
             "operative one)" if not sel_ap.cond_b else ""))
    print(f"secant entry bound: empirical {report.beta_theta_empirical:.3f}, "
          f"lag-chain recursion {report.beta_theta_recursion:.3e}")
    return 0 if (ok_e and ok_u and ok_l6) else 1


def _sweep_worker(path):
    try:
        kv = load_config(path)
        kv["record_history"] = "false"
        config = build_run_config(kv)
        record = run(config)
        plant = make_plant(config.plant, horizon=config.horizon)
        bounds = estimate_partial_bounds(plant, seed=config.seed)
        sel = check_selection(config.params, bounds["input_gain_max"],
                              float(np.max(record.max_est_norm)))
        return {
            "config": path,
            "status": "ok",
            "final_max_abs_e": f"{record.max_abs_e[-1]:.12e}",
            "sup_abs_u": f"{record.sup_abs_u:.12e}",
            "selection_ok": str(sel.cond_a and sel.cond_b).lower(),
        }
    except NonFiniteOutput as exc:
        return {"config": path, "status": f"diverged: {exc}",
                "final_max_abs_e": "nan", "sup_abs_u": "nan", "selection_ok": "false"}
    except AdaptiveIlcError as exc:
        return {"config": path, "status": f"config error: {exc}",
                "final_max_abs_e": "nan", "sup_abs_u": "nan", "selection_ok": "false"}


def cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.configs))
    if not paths:
        # a comma list mixing preset names and paths also works
        paths = [p.strip() for p in args.configs.split(",") if p.strip()]
        paths = [p for p in paths if p in PRESETS or os.path.exists(p)]
    if not paths:
        print(f"sweep: no configs match {args.configs!r}", file=sys.stderr)
        return 2
    rows = []
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_worker, paths))
    else:
        rows = [_sweep_worker(p) for p in paths]

    outdir = args.out or "sweep-out"
    os.makedirs(outdir, exist_ok=True)
    header = ["config", "status", "final_max_abs_e", "sup_abs_u", "selection_ok"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row[h]).replace(",", ";") for h in header))
    tmp = os.path.join(outdir, "sweep.csv.tmp")
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, os.path.join(outdir, "sweep.csv"))
    failures = [r for r in rows if r["status"] != "ok"]
    for row in rows:
        print(f"{row['config']}: {row['status']} final_max_abs_e={row['final_max_abs_e']}")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="adaptive-ilc",
        description="Optimization-based adaptive ILC experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run and write CSV artifacts")
    p_run.add_argument("--config", required=True,
                       help="preset name (sec6-nominal, sec6-robust, sec6-first-order) or config path")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--iterations", type=int, default=None)
    p_run.add_argument("--no-diagnostics", action="store_true")
    p_run.add_argument("--snapshots", default=None, help="comma list of snapshot iterations")
    p_run.set_defaults(func=cmd_run)

    p_diag = sub.add_parser("diagnose", help="replay a recorded run through the analysis checks")
    p_diag.add_argument("run_dir", help="directory produced by 'run'")
    p_diag.add_argument("--out", default=None, help="output directory (default: run dir)")
    p_diag.add_argument("--tol", type=float, default=1e-8,
                        help="consistency tolerance (relative)")
    p_diag.set_defaults(func=cmd_diagnose)

    p_sweep = sub.add_parser("sweep", help="run many configs and aggregate final metrics")
    p_sweep.add_argument("configs", help="glob of config files, or comma list of presets/paths")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
