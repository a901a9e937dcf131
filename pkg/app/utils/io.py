import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.errors import InputError
from app.models.graph import Graph
from app.models.units import REQUIRED_UNIT_COLUMNS, UnitTable
from app.modules.graph_core import induce
from app.utils.constants import ERROR_MESSAGES, FLOAT_FORMAT

logger = logging.getLogger(__name__)


def natural_key(unit_id: str):
    """Numeric ids sort numerically, everything else after them as text"""
    text = str(unit_id)
    return (0, int(text), "") if text.lstrip("-").isdigit() else (1, 0, text)


def read_csv(path, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False,
                           na_values=[""], **kwargs)
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"{ERROR_MESSAGES['UNREADABLE_FILE']} {path}: {e}")
    except pd.errors.EmptyDataError:
        raise InputError(f"{ERROR_MESSAGES['UNREADABLE_FILE']} {path}: file is empty")
    except pd.errors.ParserError as e:
        raise InputError(f"{ERROR_MESSAGES['MALFORMED_ROW']} in {path}: {e}")


def require_columns(frame: pd.DataFrame, columns: Sequence[str], path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(f"{ERROR_MESSAGES['MISSING_COLUMNS']} in {path}: {missing}")


def load_edge_list(path, ids: Optional[Sequence[str]] = None) -> Tuple[Graph, List[str]]:
    """Read a `src,dst` CSV into a Graph.

    Vertex k is the k-th id in natural sorted order (or in `ids` when the unit
    table fixes the vertex set). Reversed duplicates collapse to one edge and
    self-loops are dropped with a warning.
    """
    frame = read_csv(path)
    require_columns(frame, ["src", "dst"], path)

    rows = []
    for position, (src, dst) in enumerate(zip(frame["src"], frame["dst"])):
        line = position + 2
        if pd.isna(src) or pd.isna(dst):
            raise InputError(ERROR_MESSAGES["MALFORMED_ROW"] + ": missing endpoint", line=line)
        rows.append((str(src).strip(), str(dst).strip(), line))

    if ids is None:
        id_map = sorted({u for src, dst, _ in rows for u in (src, dst)}, key=natural_key)
    else:
        id_map = [str(u) for u in ids]
    index = {u: k for k, u in enumerate(id_map)}

    edges = set()
    directed = set()
    loops = 0
    for src, dst, line in rows:
        if src not in index or dst not in index:
            raise InputError(f"{ERROR_MESSAGES['UNKNOWN_UNIT']}: {src if src not in index else dst}", line=line)
        if src == dst:
            loops += 1
            continue
        u, v = index[src], index[dst]
        directed.add((u, v))
        edges.add((min(u, v), max(u, v)))

    if loops:
        logger.warning("Dropped %d self-loop rows from %s", loops, path)
    if any((v, u) in directed for u, v in directed):
        logger.warning("%s lists edges in both directions; treating the graph as undirected", path)
    return Graph(len(id_map), edges), id_map


def write_edge_list(g: Graph, path, id_map: Optional[Sequence[str]] = None) -> Path:
    id_map = list(id_map) if id_map is not None else [str(k) for k in range(g.n)]
    frame = pd.DataFrame(
        [(id_map[u], id_map[v]) for u, v in g.sorted_edges()], columns=["src", "dst"]
    )
    return report_writer.write_csv(frame, path)


def load_unit_table(path) -> UnitTable:
    """Read a `unit,treated,outcome[,covariates...]` CSV"""
    frame = read_csv(path)
    require_columns(frame, REQUIRED_UNIT_COLUMNS, path)

    for position, row in enumerate(frame[REQUIRED_UNIT_COLUMNS].itertuples(index=False)):
        line = position + 2
        if any(pd.isna(value) for value in row):
            raise InputError(ERROR_MESSAGES["MALFORMED_ROW"] + ": empty unit, treated or outcome", line=line)
        if row.treated not in ("0", "1"):
            raise InputError(f"treated must be 0 or 1, got {row.treated!r}", line=line)
        try:
            float(row.outcome)
        except ValueError:
            raise InputError(f"outcome is not a number: {row.outcome!r}", line=line)

    if frame["unit"].duplicated().any():
        dupes = sorted(frame.loc[frame["unit"].duplicated(), "unit"].unique())[:5]
        raise InputError(f"{ERROR_MESSAGES['DUPLICATE_IDS']}: {dupes}")

    covariates = [c for c in frame.columns if c not in REQUIRED_UNIT_COLUMNS]
    if frame[covariates].isna().any().any():
        raise InputError("covariate cells must not be empty")

    frame["unit"] = frame["unit"].str.strip()
    frame["treated"] = frame["treated"].astype(int)
    frame["outcome"] = frame["outcome"].astype(float)
    for column in covariates:
        numeric = pd.to_numeric(frame[column], errors="coerce")
        if not numeric.isna().any():
            frame[column] = numeric
    frame = frame.set_index("unit")
    frame = frame.loc[sorted(frame.index, key=natural_key)]
    return UnitTable(frame[["treated", "outcome"] + covariates])


def filter_max_degree(g: Graph, units: UnitTable, cap: int) -> Tuple[Graph, UnitTable]:
    """Drop units whose degree exceeds `cap` and re-induce the graph on the rest"""
    if cap < 1:
        raise InputError(f"degree cap must be at least 1, got {cap}")
    if len(units) != g.n:
        raise InputError("unit table and graph disagree on the number of units")
    keep = [v for v in g.vertices() if g.degree(v) <= cap]
    if not keep:
        raise InputError(ERROR_MESSAGES["ALL_UNITS_REMOVED"])
    if len(keep) < g.n:
        logger.info("Degree cap %d removed %d of %d units", cap, g.n - len(keep), g.n)
    sub, _ = induce(g, keep)
    return sub, units.take(keep)


class ReportWriter:
    """Writes CSV and JSON reports with a fixed layout"""

    @staticmethod
    def write_csv(frame: pd.DataFrame, path, index: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    @staticmethod
    def to_jsonable(value: Any) -> Any:
        if isinstance(value, dict):
            return {str(k): ReportWriter.to_jsonable(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [ReportWriter.to_jsonable(v) for v in value]
        if isinstance(value, np.ndarray):
            return ReportWriter.to_jsonable(value.tolist())
        if isinstance(value, np.generic):
            return ReportWriter.to_jsonable(value.item())
        if isinstance(value, float) and not np.isfinite(value):
            return None
        return value

    @staticmethod
    def write_json(payload: Dict[str, Any], path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(ReportWriter.to_jsonable(payload), handle, indent=2, sort_keys=True)
            handle.write("\n")
        return path


# Global instances
report_writer = ReportWriter()
