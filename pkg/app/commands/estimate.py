import argparse
import logging
from typing import Any, Dict, List

import pandas as pd
from pydantic import ValidationError

from app.commands import (
    add_census_args,
    add_input_args,
    add_output_args,
    census_options,
    load_inputs,
    out_path,
    parse_id_list,
)
from app.config import settings
from app.errors import EstimationUndefinedError, InputError, InternalError, NetMatchError
from app.models.matching import MatchConfig, MatchResult
from app.modules.baselines import run_baselines
from app.modules.flame import run_flame
from app.modules.motif_census import binarize, census_all_units, census_table
from app.utils.constants import (
    BASELINE_ESTIMATORS,
    ERROR_MESSAGES,
    FLAME,
    OUTPUT_FILES,
    SUCCESS_MESSAGES,
)
from app.utils.io import report_writer

logger = logging.getLogger(__name__)


def add_match_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bins", type=int, default=None,
                        help="coarsen subgraph counts into this many quantile bins")
    parser.add_argument("--c", type=float, default=settings.MATCH_C, help="balancing factor weight")
    parser.add_argument("--d", type=float, default=settings.MATCH_D, help="network fit weight")
    parser.add_argument("--ridge", type=float, default=settings.RIDGE_PENALTY)
    parser.add_argument("--holdout", type=float, default=settings.HOLDOUT_FRACTION,
                        help="fraction of each arm held out for the outcome model")
    parser.add_argument("--holdout-units", default=None,
                        help="comma separated unit ids forming the holdout set")
    parser.add_argument("--cross-fit", type=int, default=0, metavar="FOLDS",
                        help="score the outcome model out of fold instead of on a holdout")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--pe-g-sign", choices=["reward-fit", "literal"], default="reward-fit")
    parser.add_argument("--stop-rule", choices=["exhaust-covariates", "all-treated-matched", "mq-drop", "pe-rise"],
                        default="exhaust-covariates")
    parser.add_argument("--weighting", choices=["size", "treated"], default="size")
    parser.add_argument("--no-network-fit", action="store_true")


def parse_baselines(text: str) -> List[str]:
    if not text or text == "none":
        return []
    if text == "all":
        return list(BASELINE_ESTIMATORS)
    names = [name.strip() for name in text.split(",") if name.strip()]
    unknown = [name for name in names if name not in BASELINE_ESTIMATORS]
    if unknown:
        raise InputError(f"unknown baselines {unknown}; choose from {BASELINE_ESTIMATORS}")
    return names


def register(subparsers) -> None:
    parser = subparsers.add_parser("estimate", help="estimate the average direct effect by network matching")
    add_input_args(parser)
    add_census_args(parser)
    add_match_args(parser)
    add_output_args(parser)
    parser.add_argument("--baselines", default="none",
                        help="'all', 'none' or a comma separated list of baseline estimators")
    parser.set_defaults(handler=run_estimate)


def match_config(args: argparse.Namespace, ids: List[str]) -> MatchConfig:
    holdout_ids = None
    requested = parse_id_list(args.holdout_units)
    if requested:
        position = {unit: k for k, unit in enumerate(ids)}
        unknown = [unit for unit in requested if unit not in position]
        if unknown:
            raise InputError(f"holdout units not in the unit table: {unknown}")
        holdout_ids = [position[unit] for unit in requested]
    try:
        return MatchConfig(
            c=args.c,
            d=args.d,
            ridge_penalty=args.ridge,
            holdout_fraction=args.holdout,
            holdout_ids=holdout_ids,
            seed=args.seed,
            cross_fit_folds=args.cross_fit,
            pe_g_sign=args.pe_g_sign,
            stop_rule=args.stop_rule,
            group_weighting=args.weighting,
            use_network_fit=not args.no_network_fit,
        )
    except ValidationError as e:
        raise InputError(f"invalid matching options: {e}")


def groups_frame(result: MatchResult, ids: List[str]) -> pd.DataFrame:
    """One row per matched unit; signature columns are blank where a covariate
    was already dropped when the group formed."""
    rows = []
    for number, group in enumerate(result.groups):
        for member in group.members:
            rows.append({
                "group": number,
                "iteration": group.iteration,
                "unit": ids[member.unit],
                "arm": "treated" if member.treated else "control",
                "outcome": member.outcome,
                **group.signature,
            })
    fixed = ["group", "iteration", "unit", "arm", "outcome"]
    signature_columns = sorted({c for g in result.groups for c in g.signature})
    return pd.DataFrame(rows, columns=fixed + signature_columns)


def drop_log_frame(result: MatchResult) -> pd.DataFrame:
    columns = ["iteration", "dropped", "bf", "pe_y", "pe_g", "mq", "newly_matched"]
    return pd.DataFrame([vars(record) for record in result.drop_log], columns=columns)


def run_estimate(args: argparse.Namespace) -> Dict[str, Any]:
    """Census, FLAME matching and optional baselines; writes estimates,
    matched groups and the drop log"""
    try:
        baselines = parse_baselines(args.baselines)
        graph, units = load_inputs(args)
        t, y = units.treated, units.outcome

        censuses, universe = census_all_units(graph, t, census_options(args))
        counts = census_table(censuses, universe)
        scheme = "quantile" if args.bins else "exact"
        features = binarize(counts, scheme, args.bins or 10, units.covariates())

        config = match_config(args, units.ids)
        result = run_flame(features, y, t, graph, counts, config)

        estimates: Dict[str, Any] = {
            FLAME: {
                "estimate": result.ade,
                "groups": len(result.groups),
                "matched_units": len(result.matched_units()),
                "unmatched_units": len(result.unmatched),
                "holdout_units": len(result.holdout),
                "importance_order": result.importance_order,
            }
        }
        if baselines:
            for name, outcome in run_baselines(graph, y, t, baselines).items():
                estimates[name] = outcome.to_dict()

        report_writer.write_json(estimates, out_path(args, OUTPUT_FILES["ESTIMATES"]))
        report_writer.write_csv(groups_frame(result, units.ids), out_path(args, OUTPUT_FILES["GROUPS"]))
        report_writer.write_csv(drop_log_frame(result), out_path(args, OUTPUT_FILES["DROP_LOG"]))

        if not result.defined:
            raise EstimationUndefinedError(ERROR_MESSAGES["NO_MATCHES"])
        logger.info("%s: ADE %.6g from %d groups", SUCCESS_MESSAGES["ESTIMATE_WRITTEN"],
                    result.ade, len(result.groups))
        return estimates

    except NetMatchError:
        raise
    except Exception as e:
        raise InternalError(f"Estimation failed: {str(e)}")
