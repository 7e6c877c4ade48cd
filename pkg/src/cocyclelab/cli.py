"""cocycle-lab: batch runner for the cocycle pipelines.

    cocycle-lab <pipeline> --config cfg.json [--seed N] [--out DIR] [--workers K]
    cocycle-lab summary RUN_DIR
    cocycle-lab schema

Exit status: 0 pass, 1 fail, 2 configuration error.
"""
import argparse
import json
import math
import os
import sys

import numpy as np

from . import io
from .base_systems import sample_pseudo_returns, system_from_spec
from .cocycle import generator_from_spec
from .errors import AuditRefusal, CocycleLabError, ConfigError, PreconditionError
from .lyapunov import spectrum_qr, spectrum_via_compounds
from .rigidity import (approximate_exponents_by_periodic, audit_periodic_data,
                       boundedness_audit, check_uniform_time, find_uniform_time,
                       shadowing_sweep, verify_growth_bound)
from .transfer import (construction_residual, holder_estimate_transfer,
                       mesh_sweep, save_transfer, verify_coboundary)

PIPELINES = ("spectrum", "periodic-approx", "growth-bound", "uniform-time", "closing-demo",
             "shadowing-sweep", "transfer", "boundedness")
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _chi_bounds(gen, p):
    """chi bounds from the config, else from periodic exponents up to max_period."""
    if "chi_min" in p and "chi_max" in p:
        return float(p["chi_min"]), float(p["chi_max"]), None
    audit = audit_periodic_data(gen, int(p.get("max_period", 8)))
    return (float(p.get("chi_min", audit.chi_min)), float(p.get("chi_max", audit.chi_max)),
            audit.as_dict(records=False))


def run_spectrum(system, gen, p, seed, workers):
    n = int(p.get("length", 100_000))
    x = gen.base_point(seed, length=n, past=0)
    fn = spectrum_via_compounds if p.get("method") == "compounds" else spectrum_qr
    spec = fn(gen, x, n)
    exps = [float(v) for v in spec.exponents]
    report = {"result": spec.as_dict()}
    if "expected" in p:
        tol = float(p.get("tolerance", 1e-3))
        err = float(np.max(np.abs(np.sort(p["expected"]) - np.asarray(exps))))
        report.update(error=err, tolerance=tol)
        passed, margin = err <= tol, tol - err
    else:
        passed, margin = all(math.isfinite(v) for v in exps), None
    cols = ["steps"] + [f"chi_{i + 1}" for i in range(gen.m)]
    rows = [[int(r[0])] + [float(v) for v in r[1:]] for r in spec.trace]
    return passed, margin, report, {"trace": (cols, rows)}


def run_periodic_approx(system, gen, p, seed, workers):
    eps = float(p.get("epsilon", 0.05))
    res = approximate_exponents_by_periodic(
        gen, eps, budget=int(p.get("budget", 1_000_000)), max_period=int(p.get("max_period", 24)),
        seed=seed, target_length=int(p.get("target_length", 100_000)))
    rows = []
    if res.gaps is not None:
        rows = [[i + 1, t, q, g] for i, (t, q, g) in
                enumerate(zip(res.target, res.periodic_exponents, res.gaps))]
    table = (["index", "target", "periodic", "gap"], rows)
    return res.success, eps - res.max_gap, {"result": res.as_dict()}, {"gaps": table}


def run_growth_bound(system, gen, p, seed, workers):
    lo, hi, audit = _chi_bounds(gen, p)
    rep = verify_growth_bound(gen, lo, hi, float(p.get("epsilon", 0.1)),
                              points=int(p.get("points", 64)), n_max=p.get("n_max"), seed=seed,
                              drift_tol=float(p.get("drift_tol", 1e-9)), workers=workers)
    rows = [[n, v] for n, v in enumerate(rep.margin_trace)]
    report = {"result": rep.as_dict(), "audit": audit}
    margin = float(p.get("drift_tol", 1e-9)) - rep.drift
    return rep.passed, margin, report, {"margins": (["n", "worst_log_excess"], rows)}


def run_uniform_time(system, gen, p, seed, workers):
    _, hi, audit = _chi_bounds(gen, p)
    eps = float(p.get("epsilon", 0.05))
    points = int(p.get("points", 1000))
    res = find_uniform_time(gen, hi, eps, points=points, n_max=int(p.get("n_max", 400)),
                            seed=seed, shifts=int(p.get("shifts", 8)), workers=workers)
    fresh = None
    if res.found:
        fresh = check_uniform_time(gen, hi, eps, res.N, points=int(p.get("fresh_points", points)),
                                   seed=seed + 1, workers=workers)
    passed = bool(res.found and fresh < 0 and res.subadditivity["holds"])
    report = {"result": res.as_dict(), "fresh_max_a_N": fresh, "audit": audit}
    rows = [[n, v] for n, v in enumerate(res.max_a_trace)]
    return passed, (-fresh if fresh is not None else None), report, \
        {"trace": (["n", "max_a_n"], rows)}


def run_closing_demo(system, gen, p, seed, workers):
    returns = sample_pseudo_returns(system, int(p.get("count", 100)), seed=seed,
                                    max_n=int(p.get("max_n", 16)))
    rows = []
    for k, (x, n) in enumerate(returns):
        t = system.close_pseudo_return(x, n)
        rep = system.verify_shadowing(t)
        rows.append([k, n, t.delta, rep["pass"], rep["max_slack"]])
    worst = max(r[4] for r in rows)
    report = {"closing": system.closing.as_dict(), "count": len(rows),
              "passed": sum(r[3] for r in rows), "max_slack": worst}
    table = (["index", "n", "delta", "pass", "max_slack"], rows)
    return all(r[3] for r in rows), 1.0 - worst, report, {"returns": table}


def run_shadowing_sweep(system, gen, p, seed, workers):
    exps = p.get("exponents", list(range(4, 11)))
    out = shadowing_sweep(gen, exponents=exps, trials=int(p.get("trials", 20)), seed=seed,
                          epsilon=float(p.get("epsilon", 0.05)))
    cols = ["r", "delta", "residual", "residual_max", "residual_sp", "residual_xu"]
    rows = [[r[c] for c in cols] for r in out["rows"]]
    margin = None if out["slope"] is None else out["slope"] - 0.8 * gen.alpha
    return out["passed"], margin, {"result": {k: v for k, v in out.items() if k != "rows"}}, \
        {"sweep": (cols, rows)}


def run_transfer(system, gen, p, seed, workers, out_dir=None):
    deltas = p.get("deltas", [p.get("delta", 2.0 ** -6)])
    samples = int(p.get("samples", 1000))
    try:
        sweep = mesh_sweep(gen, deltas, samples=samples, seed=seed)
    except AuditRefusal as e:
        report = {"refused": str(e), "audit": e.audit.as_dict(records=False)}
        return False, None, report, {}
    C = sweep.pop("last")
    res = verify_coboundary(gen, C, samples=samples, seed=seed)
    report = {"sweep": {k: v for k, v in sweep.items() if k != "rows"}, "final": res,
              "construction_residual": construction_residual(C),
              "holder": holder_estimate_transfer(C, seed=seed), "transfer": C.summary()}
    passed = all(r["passed"] for r in sweep["rows"])
    if len(deltas) >= 2 and not sweep["zero"]:
        passed = passed and sweep["slope"] is not None and sweep["slope"] >= 0.8 * gen.alpha
    if p.get("save_bundle") and out_dir:
        save_transfer(C, os.path.join(out_dir, "bundle"))
    cols = ["delta", "mesh", "length", "max_residual", "mean_residual", "bound", "passed"]
    rows = [[r[c] for c in cols] for r in sweep["rows"]]
    margin = min(r["bound"] - r["max_residual"] for r in sweep["rows"])
    return passed, margin, report, {"residuals": (cols, rows)}


def run_boundedness(system, gen, p, seed, workers):
    tol = float(p.get("plateau_tol", 0.01))
    out = boundedness_audit(gen, points=int(p.get("points", 8)), n_max=int(p.get("n_max", 10_000)),
                            seed=seed, plateau_tol=tol, workers=workers)
    expect = p.get("expect", "bounded")
    passed = out["bounded"] == (expect == "bounded")
    rel = out["relative_increase"]
    margin = tol - rel if expect == "bounded" else rel - tol
    rows = [[n + 1, v] for n, v in enumerate(out["log_sup_trace"])]
    report = {"result": {k: v for k, v in out.items() if k != "log_sup_trace"}, "expect": expect}
    return passed, margin, report, {"log_sup": (["n", "log_sup_d_group"], rows)}


RUNNERS = {"spectrum": run_spectrum, "periodic-approx": run_periodic_approx,
           "growth-bound": run_growth_bound, "uniform-time": run_uniform_time,
           "closing-demo": run_closing_demo, "shadowing-sweep": run_shadowing_sweep,
           "transfer": run_transfer, "boundedness": run_boundedness}


def resolve(cfg, pipeline=None, seed=None, out=None, workers=None):
    """Apply command-line overrides and validate; returns (config, out_dir, workers)."""
    cfg = dict(cfg)
    if pipeline is not None:
        if cfg.get("pipeline", pipeline) != pipeline:
            raise ConfigError(f"config is for pipeline {cfg['pipeline']!r}, not {pipeline!r}")
        cfg["pipeline"] = pipeline
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg.setdefault("seed", 0)
    io.validate_config(cfg)
    workers = int(workers or cfg.get("workers", 1))
    key = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    chash = io.content_hash(key)
    out_dir = out or cfg.get("out") or os.path.join(
        io.default_out_dir(), f"{cfg.get('name', cfg['pipeline'])}-{chash[:12]}")
    return cfg, out_dir, workers, chash


def run(cfg, pipeline=None, seed=None, out=None, workers=None):
    """Run one pipeline; returns (exit status, output directory or None)."""
    try:
        cfg, out_dir, workers, chash = resolve(cfg, pipeline, seed, out, workers)
        system = system_from_spec(cfg["system"])
        gen = generator_from_spec(system, cfg["generator"])
    except (ConfigError, PreconditionError, KeyError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG, None
    name = cfg["pipeline"]
    runner = RUNNERS[name]
    kw = {"out_dir": out_dir} if name == "transfer" else {}
    os.makedirs(out_dir, exist_ok=True)
    try:
        passed, margin, report, tables = runner(system, gen, cfg.get("params", {}), cfg["seed"],
                                                workers, **kw)
    except CocycleLabError as e:
        passed, margin, report, tables = False, None, {"error": f"{type(e).__name__}: {e}"}, {}
    body = {"pipeline": name, "verdict": "pass" if passed else "fail", "margin": margin,
            "config": cfg, "config_hash": chash, "seed": cfg["seed"]}
    body.update(report)
    io.write_report(out_dir, body, tables)
    return (EXIT_PASS if passed else EXIT_FAIL), out_dir


def _parser():
    ap = argparse.ArgumentParser(prog="cocycle-lab", description="Matrix cocycle experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", default=None,
                        help=f"output directory (default under ${io.OUT_ENV} or ./{io.DEFAULT_OUT})")
        sp.add_argument("--workers", type=int, default=None, help="worker threads")
    sp = sub.add_parser("summary", help="merge the reports under a run directory")
    sp.add_argument("run_dir")
    sub.add_parser("schema", help="print the config JSON schema")
    return ap


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_PASS
    if args.command == "schema":
        print(json.dumps(io.load_schema(), indent=2))
        return EXIT_PASS
    if args.command == "summary":
        try:
            s = io.report_summary(args.run_dir)
        except (FileNotFoundError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        print(io.dumps(s))
        return EXIT_PASS if s["verdict"] == "pass" else EXIT_FAIL
    try:
        cfg = io.load_config(args.config)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    status, out_dir = run(cfg, args.command, args.seed, args.out, args.workers)
    if out_dir:
        print(out_dir)
    return status


if __name__ == "__main__":
    sys.exit(main())
