import argparse
import logging
from typing import Dict

from app.commands import add_census_args, add_input_args, add_output_args, census_options, load_inputs, out_path
from app.errors import InternalError, NetMatchError
from app.modules.interference import components_matrix
from app.modules.motif_census import census_all_units, census_table, motif_table
from app.utils.constants import OUTPUT_FILES, SUCCESS_MESSAGES
from app.utils.io import report_writer

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("census", help="count labeled subgraphs in every unit's neighborhood")
    add_input_args(parser)
    add_census_args(parser)
    add_output_args(parser)
    parser.add_argument("--components", action="store_true",
                        help="also write the interference components of every unit")
    parser.set_defaults(handler=run_census)


def run_census(args: argparse.Namespace) -> Dict[str, str]:
    """Write the census matrix and the motif legend"""
    try:
        graph, units = load_inputs(args)
        t = units.treated
        censuses, universe = census_all_units(graph, t, census_options(args))

        table = census_table(censuses, universe, units.ids)
        written = {
            "census": report_writer.write_csv(table, out_path(args, OUTPUT_FILES["CENSUS"]), index=True),
            "motifs": report_writer.write_csv(motif_table(universe), out_path(args, OUTPUT_FILES["MOTIFS"])),
        }
        if args.components:
            comps = components_matrix(graph, t)
            comps.index = units.ids
            comps.index.name = "unit"
            written["components"] = report_writer.write_csv(
                comps, out_path(args, OUTPUT_FILES["COMPONENTS"]), index=True
            )

        logger.info("%s: %d units, %d columns", SUCCESS_MESSAGES["CENSUS_WRITTEN"], graph.n, len(universe))
        return {name: str(path) for name, path in written.items()}

    except NetMatchError:
        raise
    except Exception as e:
        raise InternalError(f"Census failed: {str(e)}")
