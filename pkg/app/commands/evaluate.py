import argparse
import logging
from typing import Any, Dict, List

from app.commands import add_census_args, add_input_args, add_output_args, load_inputs, out_path
from app.errors import InputError, InternalError, NetMatchError
from app.models.matching import GroupMember, MatchedGroup
from app.modules.match_quality import match_quality_eval
from app.utils.constants import ERROR_MESSAGES, OUTPUT_FILES, SUCCESS_MESSAGES
from app.utils.io import read_csv, require_columns, report_writer

logger = logging.getLogger(__name__)

GROUP_COLUMNS = ["group", "unit", "arm"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate-matches", help="mean graph distance between matched neighborhoods")
    add_input_args(parser)
    add_census_args(parser)
    add_output_args(parser)
    parser.add_argument("--groups", required=True, help="matched groups CSV written by `estimate`")
    parser.set_defaults(handler=run_evaluate)


def read_groups(path, ids: List[str]) -> List[MatchedGroup]:
    frame = read_csv(path)
    require_columns(frame, GROUP_COLUMNS, path)
    position = {unit: k for k, unit in enumerate(ids)}
    groups = []
    for key, part in frame.groupby("group", sort=True):
        members = []
        for unit, arm in zip(part["unit"], part["arm"]):
            if unit not in position:
                raise InputError(f"{ERROR_MESSAGES['UNKNOWN_UNIT']}: {unit}")
            if arm not in ("treated", "control"):
                raise InputError(f"arm must be treated or control, got {arm!r}")
            members.append(GroupMember(position[unit], arm == "treated", 0.0))
        if len({m.treated for m in members}) < 2:
            raise InputError(f"group {key} does not contain both arms")
        groups.append(MatchedGroup(signature={}, members=members, iteration=0))
    return groups


def run_evaluate(args: argparse.Namespace) -> Dict[str, Any]:
    try:
        graph, units = load_inputs(args)
        groups = read_groups(args.groups, units.ids)
        distance = match_quality_eval(groups, graph, units.treated, hops=args.hops)
        payload = {"groups": len(groups), "mean_graph_distance": distance}
        report_writer.write_json(payload, out_path(args, OUTPUT_FILES["MATCH_QUALITY"]))
        logger.info("%s: mean distance %.4f over %d groups",
                    SUCCESS_MESSAGES["EVALUATION_WRITTEN"], distance, len(groups))
        return payload

    except NetMatchError:
        raise
    except Exception as e:
        raise InternalError(f"Match evaluation failed: {str(e)}")
