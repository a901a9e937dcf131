"""Motif census: connected induced labeled subgraphs of every unit's
neighborhood graph, counted up to label-respecting isomorphism, and their
conversion into discrete matching covariates."""
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from itertools import combinations, permutations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.config import settings
from app.dependencies import get_worker_count
from app.errors import InputError
from app.models.census import CanonicalCode, CensusOptions, CensusVector, FeatureTable
from app.models.graph import Graph, LabeledGraph
from app.modules.graph_core import as_treatment_vector, labeled_neighborhood
from app.utils.constants import COVARIATE_KIND, SUBGRAPH_KIND

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _orderings(size: int) -> Tuple[Tuple[int, ...], ...]:
    return tuple(permutations(range(size)))


@lru_cache(maxsize=None)
def _pairs(size: int) -> Tuple[Tuple[int, int], ...]:
    return tuple(combinations(range(size), 2))


@lru_cache(maxsize=1 << 16)
def _canonical(size: int, adjacency: Tuple[int, ...], labels: Tuple[int, ...]) -> CanonicalCode:
    """Minimize (adjacency bits, label bits) over every vertex ordering.

    `adjacency[a]` is the neighbor bitmask of local vertex a.
    """
    pairs = _pairs(size)
    best = None
    for order in _orderings(size):
        adj = 0
        for a, b in pairs:
            adj = (adj << 1) | ((adjacency[order[a]] >> order[b]) & 1)
        lab = 0
        for v in order:
            lab = (lab << 1) | labels[v]
        if best is None or (adj, lab) < best:
            best = (adj, lab)

    adj_bytes = max(1, (len(pairs) + 7) // 8)
    lab_bytes = max(1, (size + 7) // 8)
    adj, lab = best
    return CanonicalCode(size, adj.to_bytes(adj_bytes, "big") + lab.to_bytes(lab_bytes, "big"))


def canonical_code(h: LabeledGraph, max_size: Optional[int] = None) -> CanonicalCode:
    if max_size is None:
        max_size = settings.MAX_MOTIF_SIZE
    if h.n > max_size:
        raise InputError(f"graph has {h.n} vertices, canonical codes are capped at {max_size}")
    adjacency = tuple(h.graph.neighbor_bits(v) for v in range(h.n))
    return _canonical(h.n, adjacency, tuple(h.labels))


def _subset_code(bits: Sequence[int], labels: Sequence[int], mask: int) -> CanonicalCode:
    vertices = []
    m = mask
    while m:
        low = m & -m
        vertices.append(low.bit_length() - 1)
        m ^= low
    adjacency = tuple(
        sum(1 << b for b, w in enumerate(vertices) if (bits[v] >> w) & 1) for v in vertices
    )
    return _canonical(len(vertices), adjacency, tuple(labels[v] for v in vertices))


def enumerate_connected_subgraphs(h: LabeledGraph, max_size: Optional[int] = None) -> CensusVector:
    """Count connected induced subgraphs with 1..max_size vertices.

    ESU-style extension: a subset grows only by vertices with a larger id than
    its root that are not adjacent to any earlier member, so every connected
    subset is reached exactly once.
    """
    if max_size is None:
        max_size = settings.MAX_MOTIF_SIZE
    if max_size < 1:
        raise InputError(f"max_size must be at least 1, got {max_size}")

    bits = [h.graph.neighbor_bits(v) for v in range(h.n)]
    labels = h.labels
    counts: Counter = Counter()

    def extend(sub: int, ext: int, closed: int, higher: int, size: int) -> None:
        counts[_subset_code(bits, labels, sub)] += 1
        if size == max_size:
            return
        while ext:
            w_bit = ext & -ext
            ext ^= w_bit
            w = w_bit.bit_length() - 1
            extend(
                sub | w_bit,
                ext | (bits[w] & ~closed & higher),
                closed | bits[w],
                higher,
                size + 1,
            )

    for v in range(h.n):
        higher = ~((1 << (v + 1)) - 1)
        root = 1 << v
        extend(root, bits[v] & higher, bits[v] | root, higher, 1)

    return CensusVector(dict(counts))


def _census_chunk(args) -> List[CensusVector]:
    g, t, units, options = args
    return [
        enumerate_connected_subgraphs(
            labeled_neighborhood(g, t, i, hops=options.hops, include_ego=options.include_ego),
            options.max_size,
        )
        for i in units
    ]


def census_all_units(
    g: Graph,
    t: Sequence[int],
    options: Optional[CensusOptions] = None,
    workers: Optional[int] = None,
) -> Tuple[List[CensusVector], List[CanonicalCode]]:
    """Census of every unit's labeled neighborhood and the ordered code universe"""
    options = options or CensusOptions()
    t = as_treatment_vector(t, g.n)
    workers = workers or get_worker_count()
    units = list(g.vertices())

    if workers > 1 and g.n > 1:
        chunks = [units[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_census_chunk, [(g, t, c, options) for c in chunks]))
        censuses: List[Optional[CensusVector]] = [None] * g.n
        for chunk, vectors in zip(chunks, results):
            for i, vector in zip(chunk, vectors):
                censuses[i] = vector
    else:
        censuses = _census_chunk((g, t, units, options))

    universe = sorted(set().union(*(c.counts for c in censuses))) if censuses else []
    logger.info("Census of %d units found %d distinct labeled subgraphs", g.n, len(universe))
    return censuses, universe


def census_table(
    censuses: Sequence[CensusVector],
    universe: Sequence[CanonicalCode],
    units: Optional[Sequence] = None,
) -> pd.DataFrame:
    """Zero-filled unit x code count matrix, one column per code"""
    units = list(units) if units is not None else list(range(len(censuses)))
    matrix = np.array([[c[code] for code in universe] for c in censuses], dtype=int)
    matrix = matrix.reshape(len(censuses), len(universe))
    return pd.DataFrame(matrix, index=pd.Index(units, name="unit"),
                        columns=[code.column_name for code in universe])


def motif_table(universe: Sequence[CanonicalCode]) -> pd.DataFrame:
    """Readable description (size, edges, treated/control members) of every column"""
    return pd.DataFrame([code.describe() for code in universe],
                        columns=["column", "size", "edges", "treated", "control"])


def _quantile_bins(column: pd.Series, bins: int) -> pd.Series:
    if column.nunique() <= 1:
        logger.warning("Column %s is constant; quantile binning leaves a single bin", column.name)
        return pd.Series(0, index=column.index, name=column.name)
    # right-closed intervals put values equal to a cut point in the lower bin
    binned = pd.qcut(column, q=bins, labels=False, duplicates="drop")
    return binned.astype(int)


def binarize(
    census: pd.DataFrame,
    scheme: str = "exact",
    bins: int = 10,
    covariates: Optional[pd.DataFrame] = None,
) -> FeatureTable:
    """Turn a census count matrix into matching covariates.

    `exact` keeps each count as its own category; `quantile` replaces counts by
    the index of their empirical quantile bin. Unit covariates are appended
    unchanged.
    """
    if scheme == "exact":
        data = census.copy()
    elif scheme == "quantile":
        if bins < 2:
            raise InputError(f"quantile binning needs at least 2 bins, got {bins}")
        data = pd.DataFrame({c: _quantile_bins(census[c], bins) for c in census.columns},
                            index=census.index)
    else:
        raise InputError(f"unknown binning scheme {scheme!r}")

    kinds: Dict[str, str] = {c: SUBGRAPH_KIND for c in data.columns}
    if covariates is not None and len(covariates.columns):
        clash = set(covariates.columns) & set(data.columns)
        if clash:
            raise InputError(f"covariate names collide with subgraph columns: {sorted(clash)}")
        data = data.join(covariates.reindex(data.index))
        kinds.update({c: COVARIATE_KIND for c in covariates.columns})

    return FeatureTable(data, kinds)
