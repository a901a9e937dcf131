"""Graph distance between neighborhood graphs (minimal Frobenius norm of the
adjacency difference over vertex reorderings) and the per-method average of
that distance over matched units."""
import logging
from functools import lru_cache
from itertools import permutations
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import settings
from app.errors import InputError
from app.models.graph import Graph, LabeledGraph
from app.models.matching import MatchedGroup
from app.modules.graph_core import labeled_neighborhood

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _permutation_array(k: int) -> np.ndarray:
    return np.array(list(permutations(range(k))), dtype=np.intp).reshape(-1, k)


def _padded(h: Union[LabeledGraph, Graph], size: int) -> np.ndarray:
    graph = h.graph if isinstance(h, LabeledGraph) else h
    matrix = np.zeros((size, size))
    matrix[: graph.n, : graph.n] = graph.adjacency_matrix()
    return matrix


def _exact(a: np.ndarray, b: np.ndarray) -> float:
    perms = _permutation_array(a.shape[0])
    permuted = b[perms[:, :, None], perms[:, None, :]]
    return float(np.sqrt(((permuted - a) ** 2).sum(axis=(1, 2)).min()))


def _degree_order(matrix: np.ndarray) -> np.ndarray:
    return np.argsort(-matrix.sum(axis=1), kind="stable")


def _heuristic(a: np.ndarray, b: np.ndarray) -> float:
    """Align both graphs by descending degree, then apply improving pairwise
    swaps to the second ordering until none is left."""
    a = a[np.ix_(_degree_order(a), _degree_order(a))]
    order = _degree_order(b)
    k = a.shape[0]

    def cost(perm):
        return ((b[np.ix_(perm, perm)] - a) ** 2).sum()

    best = cost(order)
    improved = True
    while improved:
        improved = False
        for i in range(k):
            for j in range(i + 1, k):
                candidate = order.copy()
                candidate[i], candidate[j] = candidate[j], candidate[i]
                value = cost(candidate)
                if value < best - 1e-12:
                    order, best, improved = candidate, value, True
    return float(np.sqrt(best))


def graph_distance(
    g1: Union[LabeledGraph, Graph],
    g2: Union[LabeledGraph, Graph],
    mode: str = "auto",
    max_exact_size: Optional[int] = None,
) -> float:
    """Minimal Frobenius norm of A1 - P A2 P^T with the smaller graph padded by
    isolated vertices. `exact` searches every permutation, `heuristic` returns
    an upper bound, `auto` picks exact up to `max_exact_size` vertices."""
    if max_exact_size is None:
        max_exact_size = settings.EXACT_DISTANCE_MAX_SIZE
    size = max(g1.n, g2.n)
    if size == 0:
        return 0.0
    if mode == "auto":
        mode = "exact" if size <= max_exact_size else "heuristic"
    a, b = _padded(g1, size), _padded(g2, size)
    if mode == "exact":
        if size > max_exact_size:
            raise InputError(f"exact graph distance is limited to {max_exact_size} vertices")
        return _exact(a, b)
    if mode == "heuristic":
        return _heuristic(a, b)
    raise InputError(f"unknown graph distance mode {mode!r}")


Pairing = Tuple[int, int]


def match_quality_eval(
    matches: Sequence[Union[MatchedGroup, Pairing]],
    graph: Graph,
    t: Sequence[int],
    hops: int = 1,
) -> float:
    """Mean graph distance between the neighborhoods of matched units.

    For matched groups every member is compared with the opposite-arm members
    of its group and keeps the closest; for pairings each pair contributes its
    own distance.
    """
    if not matches:
        raise InputError("match quality needs at least one group or pair")

    cache: Dict[int, LabeledGraph] = {}

    def hood(i: int) -> LabeledGraph:
        if i not in cache:
            cache[i] = labeled_neighborhood(graph, t, i, hops=hops)
        return cache[i]

    distances = []
    for match in matches:
        if isinstance(match, MatchedGroup):
            for member in match.members:
                others = match.control_units if member.treated else match.treated_units
                distances.append(min(graph_distance(hood(member.unit), hood(o)) for o in others))
        else:
            i, j = match
            distances.append(graph_distance(hood(int(i)), hood(int(j))))
    return float(np.mean(distances))
