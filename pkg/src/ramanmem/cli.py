"""Scenario-driven command-line front end.

    ramanmem --scenario run.json --command full-pipeline --out runs/demo

Exit codes: 0 success, 2 scenario/schema errors, 3 solver accuracy or
convergence errors, 4 estimation failures, 1 anything else.  The default
output root may be set with the RAMANMEM_OUT_ROOT environment variable.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .memory import ConvergenceError, SolverAccuracyError
from .homodyne import ModeExtractionError, PhaseRecoveryError
from .pipeline import EstimationError, run_scenario
from .plots import emit_plots
from .scenario import COMMANDS, ScenarioError, load_scenario

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_SOLVER = 3
EXIT_ESTIMATION = 4

log = logging.getLogger("ramanmem")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ramanmem",
        description="Simulate and estimate a Raman quantum memory of squeezed light.",
    )
    parser.add_argument("--scenario", required=True, help="path to a scenario JSON file")
    parser.add_argument("--command", required=True, choices=sorted(COMMANDS) + ["emit-plots"],
                        help="pipeline command to run")
    parser.add_argument("--out", default=None,
                        help="output directory (overrides scenario and environment)")
    parser.add_argument("--seed-override", type=int, default=None,
                        help="replace the scenario's master seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker hint; current solvers are single-threaded")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return parser


def _resolve_out_dir(args, scenario) -> Path:
    if args.out:
        return Path(args.out)
    configured = scenario.output_directory
    root = os.environ.get("RAMANMEM_OUT_ROOT")
    if configured:
        path = Path(configured)
        if root and not path.is_absolute():
            return Path(root) / path
        return path
    if root:
        return Path(root) / f"run-{args.command}"
    raise ScenarioError(
        "no output directory: pass --out, set outputs.directory in the scenario, "
        "or export RAMANMEM_OUT_ROOT"
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        scenario = load_scenario(args.scenario, seed_override=args.seed_override)
        out_dir = _resolve_out_dir(args, scenario)
        if args.command == "emit-plots":
            written = emit_plots(out_dir)
            log.info("wrote %d figures to %s", len(written), out_dir)
            for name in written:
                print(name)
            return EXIT_OK
        report = run_scenario(scenario, args.command, out_dir)
        if "svg" in scenario.formats:
            try:
                emit_plots(out_dir)
            except FileNotFoundError:
                log.info("run produced no plottable artifacts")
        log.info("report: %s", report.to_json_dict())
        print(f"wrote {len(report.manifest)} artifacts to {out_dir}")
        return EXIT_OK
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConvergenceError, SolverAccuracyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (EstimationError, PhaseRecoveryError, ModeExtractionError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
