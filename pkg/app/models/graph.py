from dataclasses import dataclass
from typing import FrozenSet, Iterable, Optional, Tuple

import networkx as nx
import numpy as np

from app.errors import InputError

Edge = Tuple[int, int]

# Per-vertex {0,1} labels; length equals the graph's vertex count
TreatmentVector = np.ndarray


class Graph:
    """Undirected simple graph on the dense vertex ids 0..n-1.

    Adjacency is kept twice: sorted neighbor tuples for enumeration and one
    integer bitmask per vertex for constant-time edge tests. Instances are never
    mutated after construction, so they can be shared between workers.
    """

    __slots__ = ("_n", "_edges", "_neighbors", "_neighbor_sets", "_bits")

    def __init__(self, n: int, edges: Iterable[Edge] = ()):
        if n < 0:
            raise InputError(f"vertex count must be non-negative, got {n}")

        adjacency = [set() for _ in range(n)]
        normalized = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise InputError(f"self-loop on vertex {u} is not allowed")
            if not (0 <= u < n and 0 <= v < n):
                raise InputError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")
            normalized.add((u, v) if u < v else (v, u))
            adjacency[u].add(v)
            adjacency[v].add(u)

        self._n = n
        self._edges: FrozenSet[Edge] = frozenset(normalized)
        self._neighbors = tuple(tuple(sorted(nbrs)) for nbrs in adjacency)
        self._neighbor_sets = tuple(frozenset(nbrs) for nbrs in adjacency)
        self._bits = tuple(sum(1 << v for v in nbrs) for nbrs in adjacency)

    @property
    def n(self) -> int:
        return self._n

    @property
    def edges(self) -> FrozenSet[Edge]:
        return self._edges

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def vertices(self) -> range:
        return range(self._n)

    def neighbors(self, v: int) -> Tuple[int, ...]:
        return self._neighbors[v]

    def neighbor_set(self, v: int) -> FrozenSet[int]:
        return self._neighbor_sets[v]

    def neighbor_bits(self, v: int) -> int:
        return self._bits[v]

    def degree(self, v: int) -> int:
        return len(self._neighbors[v])

    def degrees(self) -> np.ndarray:
        return np.array([len(nbrs) for nbrs in self._neighbors], dtype=int)

    def has_edge(self, u: int, v: int) -> bool:
        return bool((self._bits[u] >> v) & 1)

    def sorted_edges(self) -> list:
        return sorted(self._edges)

    def adjacency_matrix(self) -> np.ndarray:
        matrix = np.zeros((self._n, self._n), dtype=float)
        for u, v in self._edges:
            matrix[u, v] = matrix[v, u] = 1.0
        return matrix

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self._n))
        graph.add_edges_from(self._edges)
        return graph

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self._n == other._n and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self._n, self._edges))

    def __repr__(self) -> str:
        return f"Graph(n={self._n}, edges={self.sorted_edges()})"


@dataclass(frozen=True)
class LabeledGraph:
    """A graph whose vertices carry treatment labels.

    `vertex_map[k]` is the id of local vertex k in the graph it was cut from;
    `ego` is the local index of the focal unit when it was kept.
    """

    graph: Graph
    labels: Tuple[int, ...]
    vertex_map: Tuple[int, ...]
    ego: Optional[int] = None

    def __post_init__(self):
        if len(self.labels) != self.graph.n:
            raise InputError(
                f"label count {len(self.labels)} does not match vertex count {self.graph.n}"
            )
        if len(self.vertex_map) != self.graph.n:
            raise InputError("vertex_map must list one original id per vertex")

    @property
    def n(self) -> int:
        return self.graph.n

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Edge], labels: Iterable[int]) -> "LabeledGraph":
        """Build a standalone labeled graph whose vertex map is the identity"""
        return cls(Graph(n, edges), tuple(int(x) for x in labels), tuple(range(n)))
