"""
Command line interface.

Usage::

    ptpdelay simulate exp1_sync50ms --out runs/exp1
    ptpdelay detect runs/exp1/obs-trace.txt --out runs/exp1/profile.txt
    ptpdelay sweep detect_noise --grid grid.txt --out runs/sweep
    ptpdelay verify-bounds runs/exp1
"""

import argparse
import logging
import pathlib
import sys
from typing import List, Optional

from ptpdelay import __version__, detector
from ptpdelay.core import Call, Pipeline
from ptpdelay.harness import (
    VIOLATION_KEYS,
    InvariantViolationError,
    check_invariants,
    run_scenario,
    sweep,
)
from ptpdelay.netmodel import frame_to_observations
from ptpdelay.scenario import ScenarioError, load_grid, load_scenario
from ptpdelay.stream import Unpack
from ptpdelay.trace import (
    TraceFormatError,
    TraceWriter,
    read_key_values,
    read_trace,
    write_profile,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2


def _simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_overrides({"seed": str(args.seed)})
    result = run_scenario(scenario, args.out)

    summary = result.summary
    print(
        "{}: {} cycles, converged offset {} ns, final offset {} ns".format(
            scenario.name,
            summary["cycles_completed"],
            summary["converged_offset_ns"],
            summary["final_offset_ns"],
        )
    )
    check_invariants(summary)
    return EXIT_OK


def _detect(args) -> int:
    frame = read_trace(args.trace, "obs-trace")
    frame.columns = ["seen_at", "length", "direction"]

    profile = detector.detect(frame, use_direction=not args.no_direction)
    write_profile(args.out, profile)
    print(
        "Profile: t3={} t0={} t1={} t2={} x={} x_req={} y={} (confidence {:.3f})".format(
            profile.t3,
            profile.t0,
            profile.t1,
            profile.t2,
            profile.x,
            profile.x_req,
            profile.y,
            profile.confidence,
        )
    )
    if profile.confidence < args.min_confidence:
        logger.warning(
            "Confidence %.3f is below %.2f; labels are unreliable",
            profile.confidence,
            args.min_confidence,
        )

    with Pipeline() as p:
        obs = Unpack(frame_to_observations(frame))
        labelled = Call(detector.classify, obs, profile, min_confidence=0.0)
        row = Call(
            lambda c: {
                "seen_at_ns": c.observation.seen_at,
                "length": c.observation.wire_length,
                "direction": c.observation.direction.value,
                "label": c.label_name,
            },
            labelled,
        )
        TraceWriter(str(args.out) + ".classified", "classified-trace", row)
    p.run()

    return EXIT_OK


def _sweep(args) -> int:
    base = load_scenario(args.scenario)
    grid = load_grid(args.grid)
    table = sweep(base, grid, args.out, workers=args.workers)

    failed = table["error"].notna().sum()
    print("{} points, {} failed".format(len(table), failed))

    violations = sum(
        int(table[k].fillna(0).sum()) for k in VIOLATION_KEYS if k in table.columns
    )
    if violations:
        raise InvariantViolationError("{} invariant violations in the sweep".format(violations))
    return EXIT_OK


def verify_bounds(directory) -> List[str]:
    """Problems found in the outputs of a run. Empty if the bounds held."""
    directory = pathlib.Path(directory)
    summary = read_key_values(directory / "summary.txt", kind="summary")
    sync = read_trace(directory / "sync-trace.txt", "sync-trace")
    bound = read_trace(directory / "bound-trace.txt", "bound-trace")

    problems = [
        "{}={}".format(k, summary[k]) for k in VIOLATION_KEYS if summary.get(k)
    ]

    inverted = bound[bound["low_ns"] > bound["high_ns"]]
    problems.extend("cycle {}: empty bound".format(seq) for seq in inverted["seq"])

    merged = bound.merge(sync, on="seq", how="left", suffixes=("", "_sync"), indicator=True)
    for seq in merged.loc[merged["_merge"] != "both", "seq"]:
        problems.append("cycle {}: missing from sync-trace".format(seq))
    mismatch = merged[
        (merged["_merge"] == "both")
        & (merged["true_offset_ns"] != merged["true_offset_ns_sync"])
    ]
    problems.extend("cycle {}: traces disagree".format(seq) for seq in mismatch["seq"])

    return problems


def _verify_bounds(args) -> int:
    problems = verify_bounds(args.directory)
    for problem in problems:
        logger.error("%s", problem)
    if problems:
        print("{} violations".format(len(problems)))
        return EXIT_INVARIANT
    print("No violations")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptpdelay",
        description="Simulate and analyse delay attacks on encrypted PTP.",
    )
    parser.add_argument("--version", action="version", version=__version__)

    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("--verbose", "-v", action="count", default=0)

    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser(
        "simulate", parents=[verbose], help="Run one scenario and write its traces."
    )
    p.add_argument("scenario", help="Scenario file or bundled scenario name.")
    p.add_argument("--out", required=True, type=pathlib.Path)
    p.add_argument("--seed", type=int, help="Override the scenario seed.")
    p.set_defaults(func=_simulate)

    p = commands.add_parser(
        "detect", parents=[verbose], help="Estimate the PTP profile of an obs-trace."
    )
    p.add_argument("trace", type=pathlib.Path)
    p.add_argument("--out", required=True, type=pathlib.Path)
    p.add_argument(
        "--no-direction",
        action="store_true",
        help="Ignore the direction field of the observations.",
    )
    p.add_argument(
        "--min-confidence",
        type=float,
        default=0.9,
        help="Warn below this confidence (default: %(default)s).",
    )
    p.set_defaults(func=_detect)

    p = commands.add_parser(
        "sweep", parents=[verbose], help="Run a scenario over a parameter grid."
    )
    p.add_argument("scenario")
    p.add_argument("--grid", required=True, type=pathlib.Path)
    p.add_argument("--out", required=True, type=pathlib.Path)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_sweep)

    p = commands.add_parser(
        "verify-bounds", parents=[verbose], help="Check the outputs of a run."
    )
    p.add_argument("directory", type=pathlib.Path)
    p.set_defaults(func=_verify_bounds)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(level=max(0, logging.WARNING - args.verbose * 10))

    try:
        return args.func(args)
    except (ScenarioError, TraceFormatError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except detector.MotifNotFoundError as exc:
        logger.error("Detection failed: %s", exc)
        return EXIT_CONFIG
    except InvariantViolationError as exc:
        logger.error("%s", exc)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
