"""Graph representation helpers: induced subgraphs, k-hop neighborhoods and
labeled neighborhood views shared by the census, the interference components
and the estimators."""
from collections import deque
from typing import FrozenSet, Iterable, Sequence, Tuple

import numpy as np

from app.errors import InputError
from app.models.graph import Graph, LabeledGraph, TreatmentVector


def as_treatment_vector(t: Sequence[int], n: int) -> TreatmentVector:
    """Validate a treatment assignment against a graph's vertex count"""
    arr = np.asarray(t)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise InputError(f"treatment vector has length {arr.size}, graph has {n} vertices")
    if not np.isin(arr, (0, 1)).all():
        raise InputError("treatment indicators must be 0 or 1")
    arr = arr.astype(np.int8)
    arr.setflags(write=False)
    return arr


def _check_vertex(g: Graph, v: int) -> None:
    if not 0 <= v < g.n:
        raise InputError(f"vertex {v} is outside 0..{g.n - 1}")


def induce(g: Graph, vertices: Iterable[int]) -> Tuple[Graph, Tuple[int, ...]]:
    """Induced subgraph relabeled to 0..k-1 in sorted vertex order, plus the
    original id of every local vertex."""
    kept = tuple(sorted(set(int(v) for v in vertices)))
    for v in kept:
        _check_vertex(g, v)
    local = {v: k for k, v in enumerate(kept)}
    edges = [
        (local[u], local[w])
        for u in kept
        for w in g.neighbors(u)
        if u < w and w in local
    ]
    return Graph(len(kept), edges), kept


def induced_subgraph(g: Graph, vertices: Iterable[int]) -> Graph:
    return induce(g, vertices)[0]


def neighborhood_vertices(
    g: Graph, i: int, hops: int = 1, include_ego: bool = False
) -> FrozenSet[int]:
    """Vertices within `hops` steps of `i` (breadth-first)"""
    _check_vertex(g, i)
    if hops < 1:
        raise InputError(f"hops must be at least 1, got {hops}")

    seen = {i: 0}
    queue = deque([i])
    while queue:
        v = queue.popleft()
        if seen[v] == hops:
            continue
        for w in g.neighbors(v):
            if w not in seen:
                seen[w] = seen[v] + 1
                queue.append(w)

    if not include_ego:
        del seen[i]
    return frozenset(seen)


def labeled_neighborhood(
    g: Graph,
    t: Sequence[int],
    i: int,
    hops: int = 1,
    include_ego: bool = False,
) -> LabeledGraph:
    t = as_treatment_vector(t, g.n)
    vertices = neighborhood_vertices(g, i, hops=hops, include_ego=include_ego)
    sub, vertex_map = induce(g, vertices)
    labels = tuple(int(t[v]) for v in vertex_map)
    ego = vertex_map.index(i) if include_ego else None
    return LabeledGraph(sub, labels, vertex_map, ego)


def treated_degree(g: Graph, t: Sequence[int], i: int) -> int:
    t = as_treatment_vector(t, g.n)
    _check_vertex(g, i)
    return int(sum(int(t[j]) for j in g.neighbors(i)))


def treated_degrees(g: Graph, t: Sequence[int]) -> np.ndarray:
    """Treated degree of every unit as one sparse-friendly pass"""
    t = as_treatment_vector(t, g.n)
    return np.array([sum(int(t[j]) for j in g.neighbors(i)) for i in g.vertices()], dtype=int)


def remove_control_edges(g: Graph, t: Sequence[int]) -> Graph:
    """Copy of `g` without edges whose endpoints are both untreated"""
    t = as_treatment_vector(t, g.n)
    return Graph(g.n, [(u, v) for u, v in g.edges if t[u] or t[v]])
