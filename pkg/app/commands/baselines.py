import argparse
import logging
from typing import Any, Dict

from app.commands import add_input_args, add_output_args, load_inputs, out_path
from app.commands.estimate import parse_baselines
from app.errors import InternalError, NetMatchError
from app.modules.baselines import run_baselines
from app.utils.constants import OUTPUT_FILES, SUCCESS_MESSAGES
from app.utils.io import report_writer

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("baselines", help="run the comparison estimators only")
    add_input_args(parser)
    add_output_args(parser)
    parser.add_argument("--which", default="all", help="'all' or a comma separated list")
    parser.add_argument("--p", type=float, default=None,
                        help="Bernoulli treatment probability for SANIA (default: treated share)")
    parser.set_defaults(handler=run_baselines_command)


def run_baselines_command(args: argparse.Namespace) -> Dict[str, Any]:
    try:
        names = parse_baselines(args.which)
        graph, units = load_inputs(args)
        options = {"p": args.p} if args.p is not None else {}
        results = run_baselines(graph, units.outcome, units.treated, names, options)
        payload = {name: result.to_dict() for name, result in results.items()}
        report_writer.write_json(payload, out_path(args, OUTPUT_FILES["BASELINES"]))
        logger.info("%s: %s", SUCCESS_MESSAGES["BASELINES_WRITTEN"], ", ".join(payload))
        return payload

    except NetMatchError:
        raise
    except Exception as e:
        raise InternalError(f"Baselines failed: {str(e)}")
