from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import pandas as pd
from pydantic import BaseModel, Field

from app.config import settings
from app.utils.constants import COVARIATE_KIND, SUBGRAPH_KIND


class CensusOptions(BaseModel):
    hops: int = Field(default=settings.HOPS, ge=1)
    include_ego: bool = settings.INCLUDE_EGO
    max_size: int = Field(default=settings.MAX_MOTIF_SIZE, ge=1)


@dataclass(frozen=True, order=True)
class CanonicalCode:
    """Isomorphism-invariant key of a small labeled graph.

    `code` holds the minimal adjacency bit string over all vertex orderings
    followed by the label bit string of that ordering. Codes sort by size first,
    then by bytes.
    """

    size: int
    code: bytes

    @property
    def hex(self) -> str:
        return self.code.hex()

    @property
    def column_name(self) -> str:
        return f"g{self.size}_{self.hex}"

    @property
    def _adjacency_bytes(self) -> int:
        return max(1, (self.size * (self.size - 1) // 2 + 7) // 8)

    @property
    def n_edges(self) -> int:
        return bin(int.from_bytes(self.code[: self._adjacency_bytes], "big")).count("1")

    @property
    def n_treated(self) -> int:
        return bin(int.from_bytes(self.code[self._adjacency_bytes :], "big")).count("1")

    def describe(self) -> Dict[str, object]:
        return {
            "column": self.column_name,
            "size": self.size,
            "edges": self.n_edges,
            "treated": self.n_treated,
            "control": self.size - self.n_treated,
        }


@dataclass
class CensusVector:
    """Counts of connected induced labeled subgraphs; absent codes count zero"""

    counts: Dict[CanonicalCode, int] = field(default_factory=dict)

    def __getitem__(self, code: CanonicalCode) -> int:
        return self.counts.get(code, 0)

    def codes(self) -> List[CanonicalCode]:
        return sorted(self.counts)

    def total(self, size: Optional[int] = None) -> int:
        return sum(c for k, c in self.counts.items() if size is None or k.size == size)


@dataclass
class FeatureTable:
    """Units x discrete matching covariates.

    One categorical column per subgraph stands in for its one-hot indicators:
    equality on the column is agreement on every indicator.
    """

    data: pd.DataFrame
    kinds: Dict[str, str]

    def __post_init__(self):
        missing = set(self.data.columns) - set(self.kinds)
        if missing:
            raise ValueError(f"columns without a kind: {sorted(missing)}")
        if self.data.isna().any().any():
            raise ValueError("feature table cells must all be populated")

    @property
    def columns(self) -> List[str]:
        return list(self.data.columns)

    @property
    def units(self) -> List[int]:
        return list(self.data.index)

    @property
    def subgraph_columns(self) -> List[str]:
        return [c for c in self.data.columns if self.kinds[c] == SUBGRAPH_KIND]

    @property
    def covariate_columns(self) -> List[str]:
        return [c for c in self.data.columns if self.kinds[c] == COVARIATE_KIND]

    def subset(self, units: Iterable[int]) -> "FeatureTable":
        return FeatureTable(self.data.loc[list(units)], dict(self.kinds))
