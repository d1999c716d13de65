"""Command-line harness: run scenarios, sweep seeds, replay traces.

Subcommands:
  run     --scenario s.json [--seed N] [--out DIR] [--ids on|off] [--trace on|off]
  batch   --scenario s.json --seeds A..B [--out DIR] [--ids on|off]
  replay  --trace trace.jsonl [--out DIR]

Outputs under --out: metrics.json, reputation.csv, trace.jsonl, digest.txt.
Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional

from . import metrics as metrics_mod
from . import tracelog
from .engine import run_scenario
from .scenario import Scenario, ScenarioError, load_scenario

logger = logging.getLogger("repsim")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("REPSIM_LOG_LEVEL", "info").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")


def _metrics_json(report: metrics_mod.MetricsReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _write_outputs(out: Optional[str], report, result, write_trace: bool,
                   scenario: Scenario, seed: int) -> None:
    if not out:
        return
    _write(os.path.join(out, "metrics.json"), _metrics_json(report))
    _write(os.path.join(out, "digest.txt"), result.digest() + "\n")
    if write_trace:
        _write(os.path.join(out, "trace.jsonl"), tracelog.to_jsonl(result.records))
    csv_path = os.path.join(out, "reputation.csv")
    os.makedirs(out, exist_ok=True)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario_id", "seed", "window", "observer",
                         "subject", "value", "class"])
        for window, observer, subject, value, cls in result.reputation_rows:
            writer.writerow([scenario.name, seed, window, observer,
                             subject, value, cls])


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scenario.seed
    ids = None if args.ids is None else (args.ids == "on")
    result = run_scenario(scenario, seed=seed, ids_enabled=ids)
    report = metrics_mod.compute_metrics(result.records)
    _write_outputs(args.out, report, result, args.trace != "off",
                   scenario, seed)
    print(f"digest {result.digest()}")
    print(f"pdr {report.pdr_overall:.4f} delivered {report.delivered} "
          f"generated {report.generated}")
    return 0


def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        a, b = int(lo), int(hi)
        if b < a:
            raise ScenarioError(f"--seeds: empty range {text}")
        return list(range(a, b + 1))
    return [int(text)]


def _cmd_batch(args) -> int:
    scenario = load_scenario(args.scenario)
    seeds = _parse_seed_range(args.seeds)
    ids = None if args.ids is None else (args.ids == "on")
    reports = []
    for seed in seeds:
        result = run_scenario(scenario, seed=seed, ids_enabled=ids)
        report = metrics_mod.compute_metrics(result.records)
        reports.append(report)
        if args.out:
            _write(os.path.join(args.out, f"seed_{seed}", "metrics.json"),
                   _metrics_json(report))
            _write(os.path.join(args.out, f"seed_{seed}", "digest.txt"),
                   result.digest() + "\n")
        logger.info("seed %d: pdr %.4f", seed, report.pdr_overall)
    agg = metrics_mod.aggregate(reports)
    if args.out:
        _write(os.path.join(args.out, "aggregate.json"),
               json.dumps(agg, sort_keys=True, indent=2) + "\n")
    print(json.dumps(agg, sort_keys=True))
    return 0


def _cmd_replay(args) -> int:
    with open(args.trace, "r", encoding="utf-8") as fh:
        text = fh.read()
    records = tracelog.parse_jsonl(text)
    report = metrics_mod.compute_metrics(records)
    digest = tracelog.digest(records)
    if args.out:
        _write(os.path.join(args.out, "metrics.json"), _metrics_json(report))
        _write(os.path.join(args.out, "digest.txt"), digest + "\n")
    print(f"digest {digest}")
    print(f"pdr {report.pdr_overall:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repsim",
        description="Reputation-IDS ad hoc network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--ids", choices=["on", "off"], default=None)
    p_run.add_argument("--trace", choices=["on", "off"], default="on")
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run a seed sweep")
    p_batch.add_argument("--scenario", required=True)
    p_batch.add_argument("--seeds", required=True,
                         help="seed range, e.g. 1..10")
    p_batch.add_argument("--out", default=None)
    p_batch.add_argument("--ids", choices=["on", "off"], default=None)
    p_batch.set_defaults(func=_cmd_batch)

    p_replay = sub.add_parser("replay", help="recompute metrics from a trace")
    p_replay.add_argument("--trace", required=True)
    p_replay.add_argument("--out", default=None)
    p_replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (metrics_mod.TruncatedTrace, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime assertion failures
        logger.exception("run failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
