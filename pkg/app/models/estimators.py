from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenpairs of a symmetric matrix, eigenvalues descending, vectors as columns"""

    values: np.ndarray
    vectors: np.ndarray

    def residual(self, matrix: np.ndarray) -> float:
        return float(np.max(np.abs(matrix @ self.vectors - self.vectors * self.values)))


@dataclass(frozen=True)
class SaniaWeights:
    weights: np.ndarray
    p: float


@dataclass
class EstimatorResult:
    """Uniform estimator output: point estimate plus method diagnostics"""

    estimate: Optional[float]
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    pairs: List[Tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"estimate": self.estimate, "diagnostics": self.diagnostics}
