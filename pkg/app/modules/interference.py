"""Interference components computed on each unit's ego-included labeled
neighborhood: treated degree, treated triangles, treated k-stars, dagger
counts, and normalized betweenness / closeness."""
import logging
from itertools import combinations
from math import comb
from typing import Sequence

import networkx as nx
import pandas as pd

from app.errors import InputError
from app.models.graph import Graph
from app.modules.graph_core import (
    _check_vertex,
    as_treatment_vector,
    induce,
    neighborhood_vertices,
    treated_degree,
)
from app.utils.constants import COMPONENT_NAMES

logger = logging.getLogger(__name__)

SCOPES = ("neighborhood", "graph")


def _ego_graph(g: Graph, i: int):
    sub, vertex_map = induce(g, neighborhood_vertices(g, i, hops=1, include_ego=True))
    return sub, vertex_map, vertex_map.index(i)


def _labels(g: Graph, t: Sequence[int], i: int, ego_label: bool):
    """Treatment labels as seen from unit `i`; without `ego_label` the unit's
    own treatment reads as control."""
    t = as_treatment_vector(t, g.n)
    if ego_label:
        return t
    _check_vertex(g, i)
    if not t[i]:
        return t
    t = t.copy()
    t[i] = 0
    return t


def treated_triangles(g: Graph, t: Sequence[int], i: int, ego_label: bool = True) -> int:
    t = _labels(g, t, i, ego_label)
    sub, vmap, _ = _ego_graph(g, i)
    count = 0
    for a, b, c in combinations(range(sub.n), 3):
        if sub.has_edge(a, b) and sub.has_edge(b, c) and sub.has_edge(a, c):
            if t[vmap[a]] or t[vmap[b]] or t[vmap[c]]:
                count += 1
    return count


def treated_kstars(g: Graph, t: Sequence[int], i: int, k: int, ego_label: bool = True) -> int:
    """k-stars (a center and k of its neighbors) with at least one treated member"""
    if k < 2:
        raise InputError(f"k-stars need k >= 2, got {k}")
    t = _labels(g, t, i, ego_label)
    sub, vmap, _ = _ego_graph(g, i)
    count = 0
    for center in range(sub.n):
        leaves = sub.neighbors(center)
        stars = comb(len(leaves), k)
        if not t[vmap[center]]:
            untreated = sum(1 for v in leaves if not t[vmap[v]])
            stars -= comb(untreated, k)
        count += stars
    return count


def dagger(g: Graph, t: Sequence[int], i: int, k: int, ego_label: bool = True) -> int:
    """Neighborhood vertices with degree >= k and a treated neighbor, both
    measured inside the ego-included neighborhood graph."""
    if k < 1:
        raise InputError(f"dagger needs k >= 1, got {k}")
    t = _labels(g, t, i, ego_label)
    sub, vmap, _ = _ego_graph(g, i)
    return sum(
        1
        for v in range(sub.n)
        if sub.degree(v) >= k and any(t[vmap[w]] for w in sub.neighbors(v))
    )


def betweenness(g: Graph, i: int) -> float:
    """Vertex betweenness of `i` in `g`, scaled by 2 / (n^2 - 3n + 2); 0 when n < 3"""
    if g.n < 3:
        return 0.0
    return float(nx.betweenness_centrality(g.to_networkx(), normalized=True)[i])


def closeness(g: Graph, i: int) -> float:
    """(reachable - 1) / total distance inside the component of `i`; 0 if isolated"""
    return float(nx.closeness_centrality(g.to_networkx(), u=i, wf_improved=False))


def _neighborhood_centralities(g: Graph, i: int):
    sub, _, ego = _ego_graph(g, i)
    return betweenness(sub, ego), closeness(sub, ego)


def zscore_normalize(components: pd.DataFrame) -> pd.DataFrame:
    """Center each column and scale by its sample standard deviation.

    Constant columns become zeros.
    """
    if len(components) < 2:
        raise InputError("z-scoring needs at least 2 units")
    centered = components - components.mean()
    sd = components.std(ddof=1)
    scaled = centered / sd.where(sd > 0, 1.0)
    scaled.loc[:, sd <= 0] = 0.0
    return scaled.astype(float)


def components_matrix(
    g: Graph,
    t: Sequence[int],
    scope: str = "neighborhood",
    normalize: bool = False,
    stars: Sequence[int] = (2, 4),
    dagger_k: int = 3,
    ego_label: bool = True,
) -> pd.DataFrame:
    """All interference components for every unit.

    `scope` picks where betweenness and closeness are measured: the unit's
    ego-included neighborhood graph or the whole graph. With `ego_label` off
    a unit's own treatment does not mark its triangles, stars or dagger
    vertices as treated.
    """
    if scope not in SCOPES:
        raise InputError(f"unknown centrality scope {scope!r}; expected one of {SCOPES}")
    t = as_treatment_vector(t, g.n)

    if scope == "graph":
        nxg = g.to_networkx()
        whole_b = nx.betweenness_centrality(nxg, normalized=True) if g.n >= 3 else {}
        whole_c = nx.closeness_centrality(nxg, wf_improved=False)

    rows = []
    for i in g.vertices():
        if scope == "graph":
            b, c = whole_b.get(i, 0.0), whole_c[i]
        else:
            b, c = _neighborhood_centralities(g, i)
        rows.append(
            [
                treated_degree(g, t, i),
                treated_triangles(g, t, i, ego_label),
                *(treated_kstars(g, t, i, k, ego_label) for k in stars),
                dagger(g, t, i, dagger_k, ego_label),
                b,
                c,
            ]
        )

    columns = (
        ["treated_degree", "treated_triangles"]
        + [f"treated_{k}stars" for k in stars]
        + [f"dagger_{dagger_k}", "betweenness", "closeness"]
    )
    frame = pd.DataFrame(rows, columns=columns, index=pd.Index(range(g.n), name="unit"))
    frame = frame.astype(float)
    logger.debug("computed %d interference components for %d units (scope=%s)", len(columns), g.n, scope)
    return zscore_normalize(frame) if normalize else frame


def default_components(
    g: Graph,
    t: Sequence[int],
    scope: str = "neighborhood",
    normalize: bool = True,
    ego_label: bool = True,
) -> pd.DataFrame:
    frame = components_matrix(g, t, scope=scope, normalize=normalize, ego_label=ego_label)
    return frame[COMPONENT_NAMES]
