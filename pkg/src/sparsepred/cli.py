"""Command-line experiment runner.

    sparsepred <command> [--config FILE] [--out DIR] [--seed N] [--draws N] [--jobs N]

Every command writes ``<out>/<command>/<name>.csv`` and a ``report.json``
holding the resolved configuration, versions, timings and audit verdicts.
CSV files depend only on the configuration bytes and the seed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import CapabilityError, DomainError, UsageError
from .numcore import SeededStream
from .predictive import posterior_odds_moments, odds_moment_limits
from .priors import SSL, DiracLaplaceSS, HierarchicalSS, Laplace, PredictionContext
from .risk import (BoundReport, bound_theorem2, bound_theorem3_best, hierarchical_risk_mc, rate_sweep,
                   risk_values, sweep_trend)

SCHEMA_VERSION = 1
DEFAULT_SEED = 20240

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_CAPABILITY = 0, 1, 2, 3

DEFAULTS = {
    "fig1": {
        "r": 2.0, "lambdas": [0.1, 1.0, 2.0], "ss_lambda": 0.1, "etas": [0.1, 0.5, 0.8],
        "theta_min": -8.0, "theta_max": 8.0, "theta_step": 0.05,
    },
    "fig2": {
        "r": 2.0, "theta_min": -8.0, "theta_max": 8.0, "theta_step": 0.05,
        "vary_eta": {"lambda0": 10.0, "lambda1": 0.5, "etas": [0.1, 0.5, 0.8]},
        "vary_lambda0": {"eta": 0.1, "lambda1": 0.1, "lambda0s": [2.0, 5.0, 10.0, 20.0]},
        "vary_lambda1": {"eta": 0.1, "lambda0": 10.0, "lambda1s": [0.1, 0.5, 1.0]},
    },
    "audit": {
        "suites": ["theorem2", "theorem3"],
        "theorem2": {"lambdas": [0.5, 1.0, 2.0, 4.0], "rs": [0.5, 1.0, 2.0]},
        "theorem3": {"lambdas": [5.0, 10.0, 20.0], "rs": [0.5, 1.0, 2.0], "n": 1000, "s_n": 10},
        "odds_moments": {"ns": [50, 100, 200], "a": 2.0, "lam": 2.5, "s_fracs": [0.25, 0.5, 1.0],
                   "s_values": [0, 1, 2, 5, 10]},
    },
    "rate-sweep": {
        "kinds": ["theorem4", "ssl"], "ns": [100, 300, 1000, 3000], "rs": [0.5, 2.0],
        "exponent": 0.4,
    },
    "hier-sim": {
        "ns": [50, 100, 200], "r": 0.5, "lam": 2.5, "a": 2.0, "b_offset": 1.0,
        "signal_M2": 12.0, "signal_margin": 1.05, "exponent": 0.4, "draws": 200,
    },
    "reg-sim": {
        "grid": [[40, 12, 2], [60, 16, 2], [80, 20, 3]], "m": 1, "draws": 10,
        "a": 2.5, "c": 1.0, "M": 1.0, "b": 0.5,
    },
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _merge(base: dict, override: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigError(f"{where}{key}: unknown field")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}{key}: expected an object")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            if isinstance(base[key], (int, float)) and not isinstance(base[key], bool):
                if not isinstance(val, (int, float)) or isinstance(val, bool):
                    raise ConfigError(f"{where}{key}: expected a number, got {val!r}")
            if isinstance(base[key], list) and not isinstance(val, list):
                raise ConfigError(f"{where}{key}: expected a list, got {val!r}")
            out[key] = val
    return out


def load_config(command: str, path: str | None) -> dict:
    cfg = DEFAULTS[command]
    if path is None:
        return copy.deepcopy(cfg)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return _merge(cfg, raw, f"{path}: ")


def theta_grid(cfg: dict) -> np.ndarray:
    lo, hi, step = cfg["theta_min"], cfg["theta_max"], cfg["theta_step"]
    if not step > 0 or hi < lo:
        raise ConfigError("theta grid needs theta_step > 0 and theta_max >= theta_min")
    count = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(count), 10)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (dict, list)):
        return json.dumps(x, sort_keys=True, default=_json_default)
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _report(outdir: Path, command: str, cfg: dict, seed: int, files: dict, audits: list,
            timings: dict, summary: dict) -> None:
    report = {
        "command": command, "schema_version": SCHEMA_VERSION, "seed": seed, "config": cfg,
        "versions": {"sparsepred": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "files": files, "timings": timings, "audits": audits, "summary": summary,
    }
    (outdir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True,
                                                   default=_json_default) + "\n", encoding="utf-8")


def _parallel_map(fn, tasks: list, jobs: int) -> list:
    """Order-preserving map; workers only compute, merging stays in the caller."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


BOUND_HEADER = ["bound_name", "inputs", "bound", "observed", "observed_se", "slack", "satisfied", "kind"]


def _bound_row(rep) -> list:
    return [rep.bound_name, rep.inputs, rep.bound_value, rep.observed_value, rep.observed_se,
            rep.slack, rep.satisfied, rep.kind]


def _audit_entry(rep) -> dict:
    return {"bound_name": rep.bound_name, "inputs": rep.inputs, "satisfied": rep.satisfied,
            "kind": rep.kind}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _curve_rows(label_cols: list, prior, ctx, thetas) -> list[list]:
    risks = np.asarray(risk_values(prior, thetas, ctx), dtype=float)
    return [label_cols + [float(t), float(v)] for t, v in zip(thetas, risks)]


def _fig1_task(task):
    kind, params, r, thetas = task
    ctx = PredictionContext(r)
    if kind == "lasso":
        return _curve_rows([params[0]], Laplace(params[0]), ctx, thetas)
    return _curve_rows(list(params), DiracLaplaceSS(*params), ctx, thetas)


def cmd_fig1(cfg: dict, ctx: dict) -> tuple[dict, list, dict]:
    thetas = theta_grid(cfg)
    tasks = [("lasso", (lam,), cfg["r"], thetas) for lam in cfg["lambdas"]]
    tasks += [("ss", (cfg["ss_lambda"], eta), cfg["r"], thetas) for eta in cfg["etas"]]
    out = _parallel_map(_fig1_task, tasks, ctx["jobs"])
    nl = len(cfg["lambdas"])
    left = [row for rows in out[:nl] for row in rows]
    right = [row for rows in out[nl:] for row in rows]
    write_csv(ctx["dir"] / "lasso.csv", ["lambda", "theta", "risk"], left)
    write_csv(ctx["dir"] / "spike_slab.csv", ["lambda", "eta", "theta", "risk"], right)
    return {"lasso.csv": len(left), "spike_slab.csv": len(right)}, [], {}


def _fig2_task(task):
    params, r, thetas = task
    return _curve_rows(list(params), SSL(*params), PredictionContext(r), thetas)


def cmd_fig2(cfg: dict, ctx: dict) -> tuple[dict, list, dict]:
    thetas = theta_grid(cfg)
    r = cfg["r"]
    panels = {
        "vary_eta": [(cfg["vary_eta"]["lambda0"], cfg["vary_eta"]["lambda1"], e)
                     for e in cfg["vary_eta"]["etas"]],
        "vary_lambda0": [(l0, cfg["vary_lambda0"]["lambda1"], cfg["vary_lambda0"]["eta"])
                         for l0 in cfg["vary_lambda0"]["lambda0s"]],
        "vary_lambda1": [(cfg["vary_lambda1"]["lambda0"], l1, cfg["vary_lambda1"]["eta"])
                         for l1 in cfg["vary_lambda1"]["lambda1s"]],
    }
    files, curves = {}, {}
    for name, params in panels.items():
        try:
            out = _parallel_map(_fig2_task, [(p, r, thetas) for p in params], ctx["jobs"])
        except DomainError as exc:
            raise ConfigError(f"fig2.{name}: {exc}") from None
        rows = [row for rows in out for row in rows]
        write_csv(ctx["dir"] / f"{name}.csv", ["lambda0", "lambda1", "eta", "theta", "risk"], rows)
        files[f"{name}.csv"] = len(rows)
        curves[name] = (params, [np.array([row[-1] for row in rows]) for rows in out])
    audits = []
    zero = int(np.argmin(np.abs(thetas)))
    mirrored = bool(np.allclose(thetas, -thetas[::-1]))
    for name, (params, risks) in curves.items():
        for prm, risk in zip(params, risks):
            if mirrored:
                gap = float(np.max(np.abs(risk - risk[::-1])))
                audits.append({"bound_name": "fig2_even", "inputs": {"panel": name, "params": prm},
                               "satisfied": gap <= 1e-9 * max(1.0, float(np.max(risk))),
                               "kind": "shape", "gap": gap})
    params, risks = curves["vary_lambda0"]
    order = np.argsort([prm[0] for prm in params])
    at_zero = [float(risks[k][zero]) for k in order]
    audits.append({"bound_name": "fig2_zero_risk_decreasing_in_lambda0",
                   "inputs": {"lambda0s": [params[k][0] for k in order]},
                   "satisfied": all(a > b for a, b in zip(at_zero, at_zero[1:])),
                   "kind": "shape", "risk_at_zero": at_zero})
    return files, audits, {}


def _odds_moment_reports(cfg: dict) -> list:
    reps = []
    for n in cfg["ns"]:
        s_set = sorted({int(s) for s in cfg["s_values"] if s <= n}
                       | {int(round(f * n)) for f in cfg["s_fracs"]})
        b = n + 1.0
        for s in s_set:
            e1, e2 = posterior_odds_moments(s, n, cfg["a"], b, cfg["lam"])
            l1, l2 = odds_moment_limits(s, n, cfg["a"], b)
            inputs = {"s": s, "n": n, "a": cfg["a"], "b": b, "lam": cfg["lam"]}
            reps.append(BoundReport.upper("odds_moment", inputs, l1, e1))
            reps.append(BoundReport.upper("inverse_odds_moment", inputs, l2, e2))
    return reps


def cmd_audit(cfg: dict, ctx: dict) -> tuple[dict, list, dict]:
    reps = []
    unknown = set(cfg["suites"]) - {"theorem2", "theorem3", "odds_moments"}
    if unknown:
        raise ConfigError(f"suites: unknown suite(s) {sorted(unknown)}")
    if "theorem2" in cfg["suites"]:
        for r in cfg["theorem2"]["rs"]:
            for lam in cfg["theorem2"]["lambdas"]:
                reps.extend(bound_theorem2(lam, PredictionContext(r)))
    if "theorem3" in cfg["suites"]:
        t3 = cfg["theorem3"]
        for r in t3["rs"]:
            for lam in t3["lambdas"]:
                reps.append(bound_theorem3_best(lam, PredictionContext(r, t3["n"], t3["s_n"]),
                                                t3["n"], t3["s_n"]))
    if "odds_moments" in cfg["suites"]:
        reps.extend(_odds_moment_reports(cfg["odds_moments"]))
    write_csv(ctx["dir"] / "bounds.csv", BOUND_HEADER, [_bound_row(r) for r in reps])
    audits = [_audit_entry(r) for r in reps]
    return {"bounds.csv": len(reps)}, audits, {"failed": sum(not r.satisfied for r in reps)}


def _sweep_task(task):
    kind, ns, r, exponent = task
    return rate_sweep(kind, ns, r, exponent)


def cmd_rate_sweep(cfg: dict, ctx: dict) -> tuple[dict, list, dict]:
    tasks = [(k, cfg["ns"], r, cfg["exponent"]) for k in cfg["kinds"] for r in cfg["rs"]]
    for k in cfg["kinds"]:
        if k not in ("theorem4", "ssl"):
            raise ConfigError(f"kinds: unknown sweep kind {k!r}")
    results = _parallel_map(_sweep_task, tasks, ctx["jobs"])
    rows, audits, trends = [], [], {}
    for (kind, _, r, _), sweep in zip(tasks, results):
        for row in sweep:
            ex = row.extra
            rows.append([kind, row.n, row.s_n, row.r, row.sup_risk, row.theoretical_scale,
                         row.ratio, ex["ratio_limit"], ex["bound"], ex["satisfied"]])
            audits.append({"bound_name": kind, "inputs": {"n": row.n, "s_n": row.s_n, "r": r},
                           "satisfied": ex["satisfied"], "kind": "upper"})
        trends[f"{kind}@r={r}"] = sweep_trend(sweep) if sweep else None
    write_csv(ctx["dir"] / "sweep.csv", ["kind", "n", "s_n", "r", "sup_risk", "scale", "ratio",
                                         "ratio_limit", "bound", "satisfied"], rows)
    return {"sweep.csv": len(rows)}, audits, {"trend": trends}


def _hier_task(task):
    n, cfg, seed, draws = task
    s_n = int(math.ceil(n ** cfg["exponent"]))
    theta = np.zeros(n)
    mag = cfg["signal_margin"] * math.sqrt(cfg["signal_M2"] * math.log(n))
    theta[:s_n] = mag * np.where(np.arange(s_n) % 2 == 0, 1.0, -1.0)
    prior = HierarchicalSS(cfg["lam"], cfg["a"], n + cfg["b_offset"])
    ctx = PredictionContext(cfg["r"], n, s_n)
    rep = hierarchical_risk_mc(theta, prior, ctx, draws, SeededStream(seed, 40, (n,)))
    return n, s_n, rep


def cmd_hier_sim(cfg: dict, ctx: dict) -> tuple[dict, list, dict]:
    draws = cfg["draws"] if ctx["draws"] is None else ctx["draws"]
    tasks = [(n, cfg, ctx["seed"], draws) for n in cfg["ns"]]
    results = _parallel_map(_hier_task, tasks, ctx["jobs"])
    rows, draw_rows = [], []
    for n, s_n, rep in results:
        sizes = rep.model_sizes
        frac = float(np.mean(sizes >= s_n - 0.1))
        rows.append([n, s_n, cfg["r"], rep.risk.value, rep.risk.mc_se, rep.extra["scale"],
                     rep.extra["ratio"], rep.odds_mean, rep.log_odds_mean, frac,
                     rep.risk_bound_rhs])
        draw_rows.extend([n, k, float(sz)] for k, sz in enumerate(sizes))
    write_csv(ctx["dir"] / "hierarchical.csv",
              ["n", "s_n", "r", "risk", "risk_se", "scale", "ratio", "odds_mean", "log_odds_mean",
               "frac_model_size_ok", "risk_bound_rhs"], rows)
    write_csv(ctx["dir"] / "model_sizes.csv", ["n", "draw", "expected_model_size"], draw_rows)
    ratios = [row[6] for row in rows]
    summary = {"ratio_growth": (max(ratios) / ratios[0]) if ratios else None}
    return {"hierarchical.csv": len(rows), "model_sizes.csv": len(draw_rows)}, [], summary


def _reg_task(task):
    from .regress import theorem7_rate_check
    cell, cfg, seed, draws, index = task
    stream = SeededStream(seed, 70, (index,))
    return theorem7_rate_check([tuple(cell)], cfg["m"], draws, stream, cfg["a"], cfg["c"],
                               cfg["M"], cfg["b"])[0]


def cmd_reg_sim(cfg: dict, ctx: dict) -> tuple[dict, list, dict]:
    draws = cfg["draws"] if ctx["draws"] is None else ctx["draws"]
    tasks = [(cell, cfg, ctx["seed"], draws, i) for i, cell in enumerate(cfg["grid"])]
    rows_out = _parallel_map(_reg_task, tasks, ctx["jobs"])
    rows = [[r.n, r.extra["p"], r.s_n, int(r.r), r.sup_risk, r.extra["kl_se"], r.extra["tv2_mean"],
             r.theoretical_scale, r.ratio, r.extra["atypical"], r.extra["pinsker"],
             r.extra["kl_bound"], r.extra["M"], r.extra["d_hat"], r.extra["R"]] for r in rows_out]
    write_csv(ctx["dir"] / "theorem7.csv",
              ["n", "p", "s_n", "m", "typical_kl", "kl_se", "tv2_mean", "mu_n", "ratio", "atypical",
               "pinsker", "kl_bound", "M", "d_hat", "R"], rows)
    audits = [{"bound_name": "pinsker", "inputs": {"n": r.n, "p": r.extra["p"]},
               "satisfied": r.extra["pinsker"], "kind": "upper"} for r in rows_out]
    audits += [{"bound_name": "kl_bound", "inputs": {"n": r.n, "p": r.extra["p"]},
                "satisfied": r.extra["kl_bound"], "kind": "upper"} for r in rows_out]
    ratios = [r.ratio for r in rows_out]
    summary = {"ratio_growth": (max(ratios) / ratios[0]) if ratios else None}
    return {"theorem7.csv": len(rows)}, audits, summary


COMMANDS = {
    "fig1": cmd_fig1, "fig2": cmd_fig2, "audit": cmd_audit, "rate-sweep": cmd_rate_sweep,
    "hier-sim": cmd_hier_sim, "reg-sim": cmd_reg_sim,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparsepred", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON file overriding the command defaults")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed (default: 20240)")
    ap.add_argument("--draws", type=int, help="Monte Carlo draws for simulation commands")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    return ap


def run(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if args.draws is not None and args.draws < 1:
            raise ConfigError("--draws must be positive")
        if args.jobs < 1:
            raise ConfigError("--jobs must be positive")
        cfg = load_config(args.command, args.config)
        outdir = Path(args.out) / args.command
        outdir.mkdir(parents=True, exist_ok=True)
        ctx = {"dir": outdir, "seed": args.seed, "draws": args.draws, "jobs": args.jobs}
        t0 = time.perf_counter()
        files, audits, summary = COMMANDS[args.command](cfg, ctx)
        timings = {"total_seconds": time.perf_counter() - t0}
        effective = dict(cfg)
        if args.draws is not None:
            effective["draws"] = args.draws
        _report(outdir, args.command, effective, args.seed, files, audits, timings, summary)
    except (ConfigError, UsageError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failed = [a for a in audits if a["kind"] != "skipped" and not a["satisfied"]]
    print(f"{args.command}: wrote {', '.join(files) or 'no files'} to {outdir}")
    if failed:
        print(f"{len(failed)} audit(s) failed", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
