"""
cat-amp command-line front end.

    cat-amp run <config.json> [--out DIR] [--nc INT] [--fast]
    cat-amp reproduce <fig1|fig3a|fig3b|fig4|fig5> [--out DIR] [--nc INT] [--fast]
    cat-amp schema

Exit codes: 0 success, 2 invalid scenario, 3 numerical failure, 4 I/O failure,
130 interrupted, 1 anything else.
"""

import argparse
import hashlib
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import orjson
from pydantic import ValidationError

from . import __version__
from .config_loader import defaults_version
from .errors import CatAmpError, ScenarioConfigError
from .exporters import atomic_write_bytes, dumps_json, write_json
from .flow import ScenarioFlow, ScenarioState
from .flows.figure_flow import FIGURES
from .logging_config import setup_logging
from .metrics import SCENARIOS_TOTAL, exposition
from .scenario import load_scenario, scenario_schema

logger = logging.getLogger("catamp.main")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="Output directory (default: config output_path or out/<figure>)")
    common.add_argument("--nc", type=int, default=None, help="Override the cavity truncation N_c")
    common.add_argument("--fast", action="store_true", help="Smoke-test dimensions and grids")
    common.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Set logging level (default: LOG_LEVEL or INFO)")

    parser = argparse.ArgumentParser(prog="cat-amp", description="Cat-state amplification simulations.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="Run a JSON scenario file")
    run.add_argument("config", type=Path, help="Scenario JSON file")
    reproduce = sub.add_parser("reproduce", parents=[common], help="Emit the data behind a published figure")
    reproduce.add_argument("figure", choices=sorted(FIGURES))
    sub.add_parser("schema", parents=[common], help="Print the scenario JSON schema")
    return parser


def _write_manifest(state: ScenarioState, command: str, label: str, config_hash: str, wall: float,
                    started_at: str) -> None:
    out = state.out_path
    manifest = {
        "command": command,
        "label": label,
        "config_sha256": config_hash,
        "config": state.config.model_dump(mode="json", by_alias=True) if state.config else None,
        "figure": state.figure,
        "overrides": {"nc": state.cavity_dim, "fast": state.fast},
        "version": __version__,
        "defaults_version": defaults_version(),
        "started_at": started_at,
        "wall_time_seconds": round(wall, 3),
        "outputs": sorted(state.outputs),
        "summary": state.summary,
    }
    write_json(out / "manifest.json", manifest)
    atomic_write_bytes(out / "metrics.prom", exposition())


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    if args.command == "schema":
        sys.stdout.write(dumps_json(scenario_schema()).decode("utf-8") + "\n")
        return 0

    label = args.figure if args.command == "reproduce" else "scenario"
    exit_code = 0
    started = time.perf_counter()
    started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    logger.info("Main.start: command=%s target=%s nc=%s fast=%s", args.command, getattr(args, "config", label), args.nc, args.fast)

    try:
        if args.command == "run":
            config, config_hash = load_scenario(args.config)
            label = config.mode
            state = ScenarioState(
                config=config,
                out_dir=str(args.out or config.output_path),
                cavity_dim=args.nc,
                fast=args.fast,
            )
        else:
            identity = orjson.dumps({"figure": args.figure, "nc": args.nc, "fast": args.fast}, option=orjson.OPT_SORT_KEYS)
            config_hash = hashlib.sha256(identity).hexdigest()
            state = ScenarioState(
                figure=args.figure,
                out_dir=str(args.out or Path("out") / args.figure),
                cavity_dim=args.nc,
                fast=args.fast,
            )

        ScenarioFlow(state).kickoff()
        _write_manifest(state, args.command, label, config_hash, time.perf_counter() - started, started_at)
        if state.stdout_summary is not None:
            sys.stdout.write(orjson.dumps(state.stdout_summary, option=orjson.OPT_SORT_KEYS).decode("utf-8") + "\n")
        logger.info("Main.done: %s outputs written to %s", len(state.outputs), state.out_dir)

    except KeyboardInterrupt:
        logger.warning("Main: interrupted by user (Ctrl+C)")
        exit_code = 130
    except (ScenarioConfigError, ValidationError) as e:
        logger.error("Main: invalid scenario - %s", e)
        exit_code = 2
    except CatAmpError as e:
        logger.error("Main: numerical failure - %s: %s", type(e).__name__, e)
        exit_code = e.exit_code
    except OSError as e:
        logger.error("Main: I/O failure - %s", e)
        exit_code = 4
    except Exception as e:
        logger.error("Main: unexpected error - %s", e, exc_info=True)
        exit_code = 1
    finally:
        SCENARIOS_TOTAL.labels(mode=label, status=str(exit_code)).inc()
        logger.info("Main.finish: exit code %d after %.1fs", exit_code, time.perf_counter() - started)

    return exit_code


if __name__ == "__main__":
    sys.exit(main())
