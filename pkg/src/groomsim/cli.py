"""Command-line entry point: ``groomsim {simulate,analyze,calibrate,sweep,rerun}``.

Exit codes: 0 success, 2 usage/config/input error, 3 estimation or
convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List

from groomsim import __version__
from groomsim.calibration import (CalibrationTarget, SweepSettings, calibrate, sweep_alpha,
                                  write_sweep_csv)
from groomsim.config import ConfigError, load_kv
from groomsim.ledger import (EventLogError, SchemaError, UserSummary, active_user_filter,
                             build_ledger, nearest_rank, parse_event_log, user_summaries)
from groomsim.model import SimConfig, run_simulation
from groomsim.presets import get_preset
from groomsim import stats

log = logging.getLogger("groomsim")

ANALYSES = ("powerlaw", "attachment", "regression", "vol_by_d", "vol_by_density", "summaries")


class UsageError(Exception):
    pass


class RuntimeEstimationError(Exception):
    pass


def _write(path: Path, writer) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer(fh)
    return path.name


def _manifest(out: Path, subcommand: str, config: Dict, outputs: List[str], seed, started: float):
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "outputs": sorted(outputs),
        "seed": seed,
        "version": __version__,
        "duration_s": round(time.perf_counter() - started, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def _floats(text: str, key: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r}") from None


# -- simulate ----------------------------------------------------------------

def do_simulate(config: Dict[str, str], out: Path, threads: int = 1) -> List[str]:
    cfg = SimConfig.from_kv(config)
    res = run_simulation(cfg, threads=threads)
    return [
        _write(out / "trace.csv", res.write_trace),
        _write(out / "spend.csv", res.write_spend_audit),
        _write(out / "config.txt", lambda fh: fh.write(cfg.dumps())),
    ]


def cmd_simulate(args) -> Dict:
    values = load_kv(args.config) if args.config else {}
    if args.preset:
        values.setdefault("preset", args.preset)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    resolved = SimConfig.from_kv(values).to_kv()
    return {"config": resolved, "seed": int(resolved["seed"]),
            "run": lambda out: do_simulate(resolved, out, args.threads)}


# -- analyze -----------------------------------------------------------------

def _read_events(path: str):
    if path == "-":
        return parse_event_log(sys.stdin)
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_event_log(fh)


def write_summaries_csv(summaries, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("user", "N", "m", "u"))
    for s in summaries:
        w.writerow((s.user, s.N, repr(float(s.m)), s.u))


def read_summaries_csv(path) -> List[UserSummary]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["user", "N", "m", "u"]:
            raise ConfigError("summaries", f"{path}: expected header user,N,m,u")
        return [UserSummary(r["user"], int(r["N"]), float(r["m"]), int(r["u"])) for r in reader]


def do_analyze(opts: Dict, out: Path) -> List[str]:
    events = _read_events(opts["events"])
    if not events:
        raise UsageError("event log holds no events")
    t_obs = opts.get("t_obs") or max(e.day for e in events)
    mode = opts["strength"]
    ledger = build_ledger(events, t_obs=t_obs, mode=mode)
    summaries = user_summaries(ledger)
    if opts.get("active_percentile") is not None:
        keep = set(active_user_filter(summaries, opts["active_percentile"]))
        events = [e for e in events if e.groomer in keep]
        if not events:
            raise RuntimeEstimationError("active-user filter removed every user")
        ledger = build_ledger(events, t_obs=t_obs, mode=mode)
        summaries = user_summaries(ledger)

    outputs, failures = [], []
    for name in opts["analyses"]:
        try:
            if name == "summaries":
                outputs.append(_write(out / "summaries.csv",
                                      lambda fh: write_summaries_csv(summaries, fh)))
            elif name == "powerlaw":
                fit = stats.fit_power_law(list(ledger.strength.values()), x_min=opts["xmin"])
                outputs.append(_write(out / "powerlaw.csv", lambda fh: stats.write_powerlaw_csv(fit, fh)))
            elif name == "attachment":
                window = min(opts["window"], ledger.t_obs)
                curve = stats.attachment_probability(events, ledger, window)
                outputs.append(_write(out / "attachment.csv",
                                      lambda fh: stats.write_attachment_csv(curve, fh)))
            elif name == "regression":
                reg = stats.fit_nm_regression(summaries)
                outputs.append(_write(out / "regression.csv",
                                      lambda fh: stats.write_regression_csv(reg, fh)))
            elif name == "vol_by_d":
                table = stats.volume_by_strength(events, ledger, min_n=opts["min_n"])
                outputs.append(_write(out / "vol_by_d.csv", lambda fh: stats.write_volume_csv(table, fh)))
            elif name == "vol_by_density":
                tables = stats.volume_by_density(events, ledger, min_n=opts["min_n"])
                for f, table in tables.items():
                    outputs.append(_write(out / f"vol_by_density_f{f:g}.csv",
                                          lambda fh: stats.write_volume_csv(table, fh)))
        except stats.EstimationError as exc:
            failures.append(f"{name}: {exc}")
    if failures:
        raise RuntimeEstimationError("; ".join(failures))
    return outputs


def cmd_analyze(args) -> Dict:
    analyses = [a.strip() for a in args.analyses.split(",") if a.strip()]
    bad = [a for a in analyses if a not in ANALYSES]
    if bad:
        raise UsageError(f"unknown analysis {bad[0]!r}; choose from {','.join(ANALYSES)}")
    events = args.events if args.events == "-" else str(Path(args.events).resolve())
    opts = {
        "events": events,
        "analyses": analyses,
        "active_percentile": args.active_percentile,
        "window": args.window,
        "min_n": args.min_n,
        "t_obs": args.t_obs,
        "strength": args.strength,
        "xmin": args.xmin,
    }
    return {"config": opts, "seed": None, "run": lambda out: do_analyze(opts, out)}


# -- calibrate ---------------------------------------------------------------

TARGET_KEYS = {"a", "b", "u_fixed", "steps", "r0", "groomers", "replicates", "seed",
               "preset", "summaries", "groomee_pool"}


def resolve_target(values: Dict[str, str]) -> Dict[str, str]:
    """Fill a target spec from a preset or a summaries CSV; explicit keys win."""
    values = dict(values)
    unknown = sorted(set(values) - TARGET_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "preset" in values:
        try:
            p = get_preset(values.pop("preset"))
        except KeyError as exc:
            raise ConfigError("preset", str(exc)) from None
        for key, val in (("a", p.a), ("b", p.b), ("u_fixed", p.u_fixed),
                         ("steps", p.steps), ("r0", p.r0)):
            values.setdefault(key, repr(val))
    if "summaries" in values:
        path = values.pop("summaries")
        try:
            summaries = read_summaries_csv(path)
        except OSError as exc:
            raise ConfigError("summaries", str(exc)) from None
        try:
            reg = stats.fit_nm_regression(summaries)
        except stats.EstimationError as exc:
            raise ConfigError("summaries", str(exc)) from None
        values.setdefault("a", repr(reg.a))
        values.setdefault("b", repr(reg.b))
        values.setdefault("u_fixed", repr(float(nearest_rank([s.u for s in summaries], 75))))
    for key in ("a", "b", "u_fixed", "steps", "r0"):
        if key not in values:
            raise ConfigError(key, "missing required key")
    values.setdefault("groomers", "200")
    values.setdefault("replicates", "2")
    values.setdefault("seed", "0")
    values.setdefault("groomee_pool", "unbounded")
    return values


def make_target(values: Dict[str, str]) -> CalibrationTarget:
    try:
        pool = values["groomee_pool"]
        return CalibrationTarget(
            a=float(values["a"]), b=float(values["b"]), u_fixed=float(values["u_fixed"]),
            steps=int(values["steps"]), r0=float(values["r0"]),
            groomers=int(values["groomers"]), replicates=int(values["replicates"]),
            seed=int(values["seed"]), groomee_pool=None if pool == "unbounded" else int(pool),
        )
    except ValueError as exc:
        raise ConfigError("target", str(exc)) from None


def do_calibrate(config: Dict, out: Path, threads: int = 1) -> List[str]:
    target = make_target(config["target"])
    result = calibrate(target, budget=config["budget"], threads=threads)
    log.info("alpha=%.4g beta=%.4g mse=%.4g converged=%s", result.alpha_hat,
             result.beta_hat, result.objective, result.converged)
    outputs = [_write(out / "calibration.csv", result.write_csv)]
    if config["strict"] and not result.converged:
        raise RuntimeEstimationError("optimizer did not converge within budget")
    return outputs


def cmd_calibrate(args) -> Dict:
    values = load_kv(args.target)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.replicates is not None:
        values["replicates"] = str(args.replicates)
    resolved = resolve_target(values)
    make_target(resolved)
    config = {"target": resolved, "budget": args.budget, "strict": args.strict}
    return {"config": config, "seed": int(resolved["seed"]),
            "run": lambda out: do_calibrate(config, out, args.threads)}


# -- sweep -------------------------------------------------------------------

SWEEP_KEYS = {"alphas", "replicates", "beta", "r0", "steps", "groomers", "seed",
              "plexp_xmin", "preset"}


def resolve_sweep(values: Dict[str, str]) -> Dict[str, str]:
    values = dict(values)
    unknown = sorted(set(values) - SWEEP_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "preset" in values:
        try:
            p = get_preset(values.pop("preset"))
        except KeyError as exc:
            raise ConfigError("preset", str(exc)) from None
        for key in ("beta", "r0", "steps"):
            values.setdefault(key, repr(getattr(p, key)))
    for key in ("alphas", "beta", "r0", "steps"):
        if key not in values:
            raise ConfigError(key, "missing required key")
    if not _floats(values["alphas"], "alphas"):
        raise ConfigError("alphas", "empty alpha list")
    values.setdefault("replicates", "10")
    values.setdefault("groomers", "200")
    values.setdefault("seed", "0")
    values.setdefault("plexp_xmin", "10")
    return values


def do_sweep(config: Dict[str, str], out: Path, threads: int = 1) -> List[str]:
    try:
        settings = SweepSettings(
            beta=float(config["beta"]), r0=float(config["r0"]), steps=int(config["steps"]),
            groomers=int(config["groomers"]), replicates=int(config["replicates"]),
            seed=int(config["seed"]), plexp_xmin=int(config["plexp_xmin"]),
        )
    except ValueError as exc:
        raise ConfigError("sweep", str(exc)) from None
    alphas = _floats(config["alphas"], "alphas")
    try:
        rows = sweep_alpha(alphas, settings, threads=threads)
    except stats.EstimationError as exc:
        raise RuntimeEstimationError(str(exc)) from None
    return [_write(out / "sweep.csv", lambda fh: write_sweep_csv(rows, fh))]


def cmd_sweep(args) -> Dict:
    values = load_kv(args.spec)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    resolved = resolve_sweep(values)
    return {"config": resolved, "seed": int(resolved["seed"]),
            "run": lambda out: do_sweep(resolved, out, args.threads)}


# -- rerun -------------------------------------------------------------------

RUNNERS = {
    "simulate": do_simulate,
    "analyze": lambda config, out, threads=1: do_analyze(config, out),
    "calibrate": do_calibrate,
    "sweep": do_sweep,
}


def cmd_rerun(args) -> Dict:
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        sub, config = manifest["subcommand"], manifest["config"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"unreadable manifest: {exc}") from None
    if sub not in RUNNERS:
        raise UsageError(f"manifest names unknown subcommand {sub!r}")
    return {"subcommand": sub, "config": config, "seed": manifest.get("seed"),
            "run": lambda out: RUNNERS[sub](config, out, threads=args.threads)}


# -- wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groomsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="run the grooming simulation")
    p.add_argument("config", nargs="?", help="flat key = value SimConfig file")
    p.add_argument("--preset", help="dataset preset supplying r0, steps, alpha, beta")
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("analyze", help="analyse an event log")
    p.add_argument("events", help="CSV event log, or - for stdin")
    p.add_argument("--analyses", default=",".join(ANALYSES))
    p.add_argument("--active-percentile", type=float)
    p.add_argument("--window", type=int, default=30, help="attachment window in days")
    p.add_argument("--min-n", type=int, default=20)
    p.add_argument("--t-obs", type=int, help="observation period (default: last day)")
    p.add_argument("--strength", choices=("days", "volume"), default="days",
                   help="count active days (logs) or sum volumes (simulated traces)")
    p.add_argument("--xmin", type=int, default=1)
    common(p)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("calibrate", help="fit alpha and beta to a target N-m line")
    p.add_argument("target", help="target spec file")
    p.add_argument("--budget", type=int, default=200, help="Nelder-Mead evaluation budget")
    p.add_argument("--strict", action="store_true", help="exit 3 if not converged")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    common(p)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("sweep", help="sweep alpha and report a and the power-law exponent")
    p.add_argument("spec", help="sweep spec file")
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("rerun", help="reproduce a run from its manifest")
    p.add_argument("manifest")
    common(p)
    p.set_defaults(handler=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        job = args.handler(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        outputs = job["run"](out)
    except EventLogError as exc:
        print(f"error: {len(exc.errors)} bad row(s) in event log", file=sys.stderr)
        for line, msg in exc.errors[:10]:
            print(f"  line {line}: {msg}", file=sys.stderr)
        return 2
    except (ConfigError, SchemaError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeEstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    _manifest(out, job.get("subcommand", args.command), job["config"], outputs,
              job["seed"], started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
