"""Command handlers of the netmatch CLI and the input plumbing they share"""
import argparse
import logging
from pathlib import Path
from typing import List, Optional, Tuple

from app.config import settings
from app.models.census import CensusOptions
from app.models.graph import Graph
from app.models.units import UnitTable
from app.utils.io import filter_max_degree, load_edge_list, load_unit_table

logger = logging.getLogger(__name__)


def add_input_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--edges", required=True, help="edge list CSV with header src,dst")
    parser.add_argument("--units", required=True, help="unit table CSV with header unit,treated,outcome")
    parser.add_argument("--max-degree", type=int, default=settings.MAX_DEGREE,
                        help="drop units whose degree exceeds this cap (0 disables)")


def add_census_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--hops", type=int, default=settings.HOPS)
    parser.add_argument("--motif-size", type=int, default=settings.MAX_MOTIF_SIZE)
    parser.add_argument("--include-ego", action="store_true", default=settings.INCLUDE_EGO)


def add_output_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out-dir", default=settings.OUTPUT_DIR)


def census_options(args: argparse.Namespace) -> CensusOptions:
    return CensusOptions(hops=args.hops, include_ego=args.include_ego, max_size=args.motif_size)


def load_inputs(args: argparse.Namespace) -> Tuple[Graph, UnitTable]:
    """Unit table, the graph on its units and the degree cap applied to both"""
    units = load_unit_table(args.units)
    graph, _ = load_edge_list(args.edges, ids=units.ids)
    if args.max_degree:
        graph, units = filter_max_degree(graph, units, args.max_degree)
    logger.info("Loaded %d units and %d edges", graph.n, graph.num_edges)
    return graph, units


def out_path(args: argparse.Namespace, name: str) -> Path:
    return Path(args.out_dir) / name


def parse_id_list(text: Optional[str]) -> Optional[List[str]]:
    if not text:
        return None
    return [part.strip() for part in text.split(",") if part.strip()]
