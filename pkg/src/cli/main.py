#!/usr/bin/env python3
"""
Command-line front door: validate scenarios, plan overlays, run and compare simulations
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, List, Optional

from config.settings import DEFAULT_OUTPUT_DIR, DEFAULT_SEED, LOG_LEVEL
from src.domain.errors import HybridClusterError, ScenarioError, ScenarioInvalid
from src.domain.validation import load_scenario, validate_scenario
from src.overlay.topology import plan_initial_topology, topology_to_dict
from src.sim.engine import compare_scenarios, run_scenario
from src.sim.metrics import summarize, write_events, write_summary, write_timeline_csv

logger = logging.getLogger("hybrid_cluster.cli")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_ENGINE = 3

EMIT_CHOICES = frozenset({"events", "timeline", "summary", "topology"})


@dataclass(frozen=True)
class RunConfig:
    scenario_path: Path
    seed: int = DEFAULT_SEED
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    emit: FrozenSet[str] = field(default=EMIT_CHOICES)


def _report(e: Exception) -> int:
    """Print one diagnostic line per problem and map the error to an exit code"""
    if isinstance(e, ScenarioInvalid):
        for problem in e.problems:
            print(f"❌ {problem}", file=sys.stderr)
        return EXIT_INVALID
    if isinstance(e, ScenarioError):
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INVALID
    if isinstance(e, OSError):
        print(f"❌ {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return EXIT_IO
    print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
    return EXIT_ENGINE


def _load(path):
    return validate_scenario(load_scenario(path))


def cmd_validate(scenario_path) -> int:
    try:
        scenario = _load(scenario_path)
    except (HybridClusterError, OSError) as e:
        return _report(e)
    print(f"✅ {scenario_path}: {len(scenario.sites)} sites, {len(scenario.workload)} workload blocks")
    return EXIT_OK


def cmd_plan_topology(scenario_path, output_dir: Optional[Path] = None) -> int:
    try:
        topology, routes = plan_initial_topology(_load(scenario_path))
        document = json.dumps(topology_to_dict(topology, routes), indent=2)
        if output_dir is not None:
            Path(output_dir).mkdir(parents=True, exist_ok=True)
            (Path(output_dir) / "topology.json").write_text(document + "\n")
    except (HybridClusterError, OSError) as e:
        return _report(e)
    print(document)
    return EXIT_OK


def cmd_run(config: RunConfig) -> int:
    try:
        scenario = _load(config.scenario_path)
    except (HybridClusterError, OSError) as e:
        return _report(e)

    try:
        timeline = run_scenario(scenario, config.seed)
        summary = summarize(timeline)
    except HybridClusterError as e:
        logger.error(f"Simulation failed: {e}")
        return _report(e)

    out = config.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "events" in config.emit:
            write_events(timeline, out / "events.jsonl")
        if "timeline" in config.emit:
            write_timeline_csv(timeline, out / "timeline.csv")
        if "summary" in config.emit:
            write_summary(summary, out / "summary.json")
        if "topology" in config.emit:
            topology, routes = plan_initial_topology(scenario)
            (out / "topology.json").write_text(json.dumps(topology_to_dict(topology, routes), indent=2) + "\n")
    except OSError as e:
        return _report(e)

    print(json.dumps(summary, indent=2))
    logger.info(f"💾 Outputs written to {out}")
    return EXIT_OK


def cmd_compare(scenario_a, scenario_b, seed: int = DEFAULT_SEED, output_dir: Optional[Path] = None) -> int:
    try:
        a, b = _load(scenario_a), _load(scenario_b)
    except (HybridClusterError, OSError) as e:
        return _report(e)
    try:
        report = compare_scenarios(a, b, seed)
    except HybridClusterError as e:
        return _report(e)

    document = json.dumps(report, indent=2)
    if output_dir is not None:
        try:
            Path(output_dir).mkdir(parents=True, exist_ok=True)
            (Path(output_dir) / "compare.json").write_text(document + "\n")
        except OSError as e:
            return _report(e)
    print(document)
    return EXIT_OK


def _parse_emit(value: str) -> FrozenSet[str]:
    chosen = frozenset(part.strip() for part in value.split(",") if part.strip())
    unknown = chosen - EMIT_CHOICES
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown output(s): {', '.join(sorted(unknown))}")
    return chosen


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybrid-cluster",
        description="Hybrid elastic virtual cluster simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="check a scenario file")
    validate.add_argument("--scenario", required=True, type=Path)

    plan = sub.add_parser("plan-topology", help="print the overlay planned for the initial deployment")
    plan.add_argument("--scenario", required=True, type=Path)
    plan.add_argument("--out", type=Path, default=None)

    run = sub.add_parser("run", help="simulate a scenario and write its outputs")
    run.add_argument("--scenario", required=True, type=Path)
    run.add_argument("--seed", type=int, default=DEFAULT_SEED)
    run.add_argument("--out", type=Path, default=Path(DEFAULT_OUTPUT_DIR))
    run.add_argument("--emit", type=_parse_emit, default=EMIT_CHOICES,
                     help="comma-separated subset of events,timeline,summary,topology")

    compare = sub.add_parser("compare", help="run two scenarios with one seed and report b - a")
    compare.add_argument("--scenario", required=True, type=Path)
    compare.add_argument("--against", required=True, type=Path)
    compare.add_argument("--seed", type=int, default=DEFAULT_SEED)
    compare.add_argument("--out", type=Path, default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler()],
    )
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        return cmd_validate(args.scenario)
    if args.command == "plan-topology":
        return cmd_plan_topology(args.scenario, args.out)
    if args.command == "run":
        return cmd_run(RunConfig(args.scenario, args.seed, args.out, args.emit))
    return cmd_compare(args.scenario, args.against, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
