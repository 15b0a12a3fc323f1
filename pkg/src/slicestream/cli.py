"""Command-line entry point: run, plan, validate, oracle."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path


from .harness import SCHEDULERS, TRACE_LEVELS, ExperimentPlan, TraceOptions, load_plan, run_plan
from .model import ConfigError, RandomSource, ScenarioConfig, VideoCatalog, load_config, validate_config
from .oracle_suite import run_oracle_suite


def _config(args) -> tuple[ScenarioConfig, VideoCatalog]:
    if args.config:
        cfg, catalog = load_config(args.config)
    else:
        cfg, catalog = ScenarioConfig(), VideoCatalog()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "duration", None) is not None:
        cfg = cfg.replace(duration=args.duration)
    return cfg, catalog


def _trace(args) -> TraceOptions:
    return TraceOptions(args.trace, args.trace_stride)


def cmd_run(args) -> int:
    cfg, catalog = _config(args)
    plan = ExperimentPlan(base=cfg, catalog=catalog, schedulers=tuple(args.scheduler), output=Path(args.out))
    report = run_plan(plan, trace=_trace(args), check=not args.no_check, figures=args.figures)
    _print_rows(report.rows)
    return 0 if report.ok else 1


def cmd_plan(args) -> int:
    plan = load_plan(args.plan, output=args.out)
    if args.seed is not None:
        plan.base = plan.base.replace(seed=args.seed)
    if args.duration is not None:
        plan.base = plan.base.replace(duration=args.duration)
    report = run_plan(plan, workers=args.workers, trace=_trace(args), check=not args.no_check, figures=args.figures)
    _print_rows(report.rows)
    return 0 if report.ok else 1


def cmd_validate(args) -> int:
    try:
        if args.plan:
            plan = load_plan(args.config)
            print(f"ok: {len(plan.cells())} cells")
        else:
            cfg, catalog = load_config(args.config)
            validate_config(cfg, catalog)
            print(f"ok: config hash {cfg.digest(catalog)}")
    except ConfigError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return 1
    return 0


def cmd_oracle(args) -> int:
    start = time.perf_counter()
    result = run_oracle_suite(args.instances, RandomSource(args.seed, RandomSource.SCHEDULER))
    result["wall_time_s"] = round(time.perf_counter() - start, 3)
    print(json.dumps(result, indent=2, sort_keys=True, default=float))
    return 0 if result["passed"] else 1


def _print_rows(rows) -> None:
    print("cell\tstatus\twall_time_s\tconfig_hash\terror")
    for r in rows:
        print(f"{r['cell']}\t{r['status']}\t{r['wall_time_s']}\t{r['config_hash']}\t{r['error']}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicestream", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def outputs(sp):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, help="override the base seed")
        sp.add_argument("--duration", type=float, help="override simulated seconds")
        sp.add_argument("--trace", choices=TRACE_LEVELS, default="standard", help="trace verbosity")
        sp.add_argument("--trace-stride", type=int, default=100, help="slots between trace samples")
        sp.add_argument("--no-check", action="store_true", help="skip the per-slot constraint checker")
        sp.add_argument("--figures", action="store_true", help="render PNG figures next to the tables")

    run = sub.add_parser("run", help="run a single cell")
    run.add_argument("config", nargs="?", help="scenario YAML")
    run.add_argument("--scheduler", nargs="+", choices=SCHEDULERS, default=["proposed"])
    outputs(run)
    run.set_defaults(func=cmd_run)

    plan = sub.add_parser("plan", help="run a sweep campaign")
    plan.add_argument("plan", help="plan YAML")
    plan.add_argument("--workers", type=int, default=1)
    outputs(plan)
    plan.set_defaults(func=cmd_plan)

    val = sub.add_parser("validate", help="check a scenario or plan file")
    val.add_argument("config")
    val.add_argument("--plan", action="store_true", help="treat the file as a plan")
    val.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle", help="compare the CCP solver against exhaustive search")
    orc.add_argument("--instances", type=int, default=100)
    orc.add_argument("--seed", type=int, default=2024)
    orc.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"error: {v}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
