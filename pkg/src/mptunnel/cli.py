"""Command-line front end: run scenarios, list plugins, run the canned suite.

Exit codes: 0 success, 1 scenario validation error, 2 runtime error.
"""

import argparse
import json
import sys
from pathlib import Path

from . import metrics
from .engine import Simulation
from .reorder import REORDER_KINDS
from .scenario import (ScenarioConfig, ScenarioError, canned_scenario_names,
                       load_canned, load_scenario)
from .scheduler import SCHEDULER_DOCS, SCHEDULER_KINDS

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

REORDER_DOCS = {
    "adaptive": "resequencing with a threshold recomputed from measured RTTs; params: adaptive_k, max_hold_us",
    "delay_equalize": "per-flow delay lines equalizing end-to-end latency, late packets discarded; params: adaptive_k, max_hold_us",
    "none": "no receiver processing, packets delivered on arrival; no params",
    "static": "resequencing with a fixed threshold; params: static_threshold_us (defaults to the configured RTT gap), max_hold_us",
}


def run_scenario(cfg: ScenarioConfig, out_dir: Path) -> dict:
    """Execute one scenario and emit its configured outputs plus summary.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    log = Simulation(cfg).run()
    interval = cfg.nominal_interval_us()
    for out in cfg.outputs:
        metrics.export_metric(log, out.metric, out.format, out_dir / out.path,
                              interval, pdv_stream=cfg.pdv_stream)
    summary = metrics.summarize(log, interval, cfg.pdv_stream)
    summary["scenario"] = cfg.name
    summary["seed"] = cfg.seed
    metrics.write_json(out_dir / "summary.json", summary)
    return summary


def _cmd_run(args) -> int:
    try:
        cfg = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario {args.scenario}:", file=sys.stderr)
        for problem in exc.errors:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        summary = run_scenario(cfg, Path(args.out))
    except OSError as exc:
        print(f"cannot write outputs under {args.out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_list_plugins(args) -> int:
    entries = [
        {"type": "scheduler", "name": name, "doc": SCHEDULER_DOCS[name]}
        for name in sorted(SCHEDULER_KINDS)
    ] + [
        {"type": "reorder", "name": name, "doc": REORDER_DOCS[name]}
        for name in sorted(REORDER_KINDS)
    ]
    if args.json:
        print(json.dumps(entries, indent=2, sort_keys=True))
        return EXIT_OK
    print("schedulers:")
    for name in sorted(SCHEDULER_KINDS):
        print(f"  {name:<20} {SCHEDULER_DOCS[name]}")
    print("reorder kinds:")
    for name in sorted(REORDER_KINDS):
        print(f"  {name:<20} {REORDER_DOCS[name]}")
    return EXIT_OK


def _cmd_paper_suite(args) -> int:
    base = Path(args.out)
    try:
        for name in canned_scenario_names():
            cfg = load_canned(name)
            run_scenario(cfg, base / name)
            print(f"{name}: ok")
    except ScenarioError as exc:
        for problem in exc.errors:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"suite failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mptunnel",
        description="Deterministic multipath tunnel simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario file")
    run_p.add_argument("--scenario", required=True, help="scenario JSON file")
    run_p.add_argument("--seed", type=int, default=None, help="override the seed")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.set_defaults(fn=_cmd_run)

    lp = sub.add_parser("list-plugins", help="list schedulers and reorder kinds")
    lp.add_argument("--json", action="store_true", help="machine-readable output")
    lp.set_defaults(fn=_cmd_list_plugins)

    suite = sub.add_parser("paper-suite", help="run every canned scenario")
    suite.add_argument("--out", default="paper-suite-out", help="output directory")
    suite.set_defaults(fn=_cmd_paper_suite)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
