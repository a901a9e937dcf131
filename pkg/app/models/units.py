from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import pandas as pd

REQUIRED_UNIT_COLUMNS = ["unit", "treated", "outcome"]


@dataclass
class UnitTable:
    """Per-unit treatment, outcome and discrete covariates.

    Rows are kept in graph vertex order: row k describes vertex k.
    """

    data: pd.DataFrame

    @property
    def ids(self) -> List[str]:
        return [str(u) for u in self.data.index]

    @property
    def treated(self) -> np.ndarray:
        return self.data["treated"].to_numpy(dtype=int)

    @property
    def outcome(self) -> np.ndarray:
        return self.data["outcome"].to_numpy(dtype=float)

    @property
    def covariate_names(self) -> List[str]:
        return [c for c in self.data.columns if c not in ("treated", "outcome")]

    def covariates(self) -> pd.DataFrame:
        """Covariate columns indexed by vertex position"""
        frame = self.data[self.covariate_names].reset_index(drop=True)
        frame.index.name = "unit"
        return frame

    def take(self, positions: Sequence[int]) -> "UnitTable":
        return UnitTable(self.data.iloc[list(positions)])

    def __len__(self) -> int:
        return len(self.data)
