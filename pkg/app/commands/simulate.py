import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd
from pydantic import ValidationError

from app.commands import add_output_args, out_path
from app.errors import InputError, InternalError, NetMatchError
from app.models.simulation import SimConfig
from app.modules.simulation import regime_trend, run_experiment
from app.utils.constants import ERROR_MESSAGES, OUTPUT_FILES, PRESETS, SUCCESS_MESSAGES
from app.utils.io import report_writer

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="run a simulated experiment from a preset or config file")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
    source.add_argument("--config", help="SimConfig JSON document")
    source.add_argument("--regime-trend", action="store_true",
                        help="nearest-census matching error as the number of units grows")
    parser.add_argument("--reps", type=int, default=None, help="override the number of replications")
    parser.add_argument("--seed", type=int, default=None)
    add_output_args(parser)
    parser.set_defaults(handler=run_simulate)


def load_sim_config(preset: Optional[str] = None, path: Optional[str] = None,
                    reps: Optional[int] = None, seed: Optional[int] = None) -> SimConfig:
    """Resolve a preset name or JSON file into a validated SimConfig"""
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as e:
            raise InputError(f"{ERROR_MESSAGES['UNREADABLE_FILE']} {path}: {e}")
        except json.JSONDecodeError as e:
            raise InputError(f"{ERROR_MESSAGES['INVALID_CONFIG']}: {e}", line=e.lineno)
    elif preset:
        if preset not in PRESETS:
            raise InputError(f"{ERROR_MESSAGES['UNKNOWN_PRESET']} {preset!r}; available: {', '.join(PRESETS)}")
        raw = json.loads(json.dumps(PRESETS[preset]))
    else:
        raise InputError("simulate needs --preset, --config or --regime-trend")

    if reps is not None:
        raw["replications"] = reps
    if seed is not None:
        raw["seed"] = seed
    try:
        return SimConfig.model_validate(raw)
    except ValidationError as e:
        raise InputError(f"{ERROR_MESSAGES['INVALID_CONFIG']}: {e}")


def run_simulate(args: argparse.Namespace) -> Dict[str, Any]:
    try:
        if args.regime_trend:
            kwargs = {"seed": args.seed or 0}
            if args.reps is not None:
                kwargs["replications"] = args.reps
            trend = regime_trend(**kwargs)
            payload = {"mean_error": {str(n): error for n, error in trend.items()}}
            report_writer.write_json(payload, out_path(args, OUTPUT_FILES["REGIME_TREND"]))
            return payload

        config = load_sim_config(args.preset, args.config, args.reps, args.seed)
        report = run_experiment(config, progress=sys.stderr.isatty())

        report_writer.write_csv(report.records_frame(), out_path(args, OUTPUT_FILES["REPLICATIONS"]))
        summary_rows = report.summary.to_dict(orient="records") if report.summary is not None else []
        payload = {
            "name": config.name,
            "seed": config.seed,
            "replications": config.replications,
            "methods": summary_rows,
        }
        report_writer.write_json(payload, out_path(args, OUTPUT_FILES["SUMMARY"]))

        if config.match_quality:
            distances = {
                f"{row['setting']}/{row['method']}" if config.sweep else row["method"]: row["mean_graph_distance"]
                for row in summary_rows
                if pd.notna(row["mean_graph_distance"])
            }
            report_writer.write_json({"mean_graph_distance": distances},
                                     out_path(args, OUTPUT_FILES["MATCH_QUALITY"]))

        logger.info("%s for %s (%d records)", SUCCESS_MESSAGES["SIMULATION_WRITTEN"],
                    config.name, len(report.records))
        return payload

    except NetMatchError:
        raise
    except Exception as e:
        raise InternalError(f"Simulation failed: {str(e)}")
