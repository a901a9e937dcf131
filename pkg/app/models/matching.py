from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from app.config import settings


class MatchConfig(BaseModel):
    """Hyper-parameters of the almost-exact matcher"""

    c: float = Field(default=settings.MATCH_C, description="weight of the balancing factor")
    d: float = Field(default=settings.MATCH_D, description="weight of the network-fit term")
    ridge_penalty: float = Field(default=settings.RIDGE_PENALTY, ge=0)
    holdout_fraction: float = settings.HOLDOUT_FRACTION
    holdout_ids: Optional[List[int]] = None
    seed: Optional[int] = 0
    cross_fit_folds: int = Field(default=0, ge=0, description="0 scores PE_Y on a holdout split")
    pe_g_sign: Literal["reward-fit", "literal"] = "reward-fit"
    stop_rule: Literal[
        "exhaust-covariates", "all-treated-matched", "mq-drop", "pe-rise"
    ] = "exhaust-covariates"
    mq_drop_tolerance: float = Field(default=0.05, ge=0)
    pe_rise_tolerance: float = Field(default=0.05, ge=0)
    group_weighting: Literal["size", "treated"] = "size"
    use_network_fit: bool = True
    max_irls_iter: int = Field(default=50, ge=1)

    @field_validator("c", "d")
    @classmethod
    def non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("match quality weights must be non-negative")
        return v

    @field_validator("cross_fit_folds")
    @classmethod
    def fold_count(cls, v: int) -> int:
        if v == 1:
            raise ValueError("cross-fitting needs at least 2 folds")
        return v


@dataclass(frozen=True)
class GroupMember:
    unit: int
    treated: bool
    outcome: float


@dataclass
class MatchedGroup:
    """Units agreeing exactly on the active covariates, both arms present"""

    signature: Dict[str, Any]
    members: List[GroupMember]
    iteration: int

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def treated_units(self) -> List[int]:
        return [m.unit for m in self.members if m.treated]

    @property
    def control_units(self) -> List[int]:
        return [m.unit for m in self.members if not m.treated]

    @property
    def n_treated(self) -> int:
        return len(self.treated_units)

    @property
    def difference(self) -> float:
        treated = [m.outcome for m in self.members if m.treated]
        control = [m.outcome for m in self.members if not m.treated]
        return float(np.mean(treated) - np.mean(control))


@dataclass
class DropRecord:
    iteration: int
    dropped: str
    bf: float
    pe_y: float
    pe_g: float
    mq: float
    newly_matched: int


@dataclass
class MatchResult:
    groups: List[MatchedGroup] = field(default_factory=list)
    drop_log: List[DropRecord] = field(default_factory=list)
    unmatched: List[int] = field(default_factory=list)
    holdout: List[int] = field(default_factory=list)
    retained: List[str] = field(default_factory=list)
    ade: Optional[float] = None
    weighting: str = "size"

    @property
    def defined(self) -> bool:
        return self.ade is not None

    @property
    def group_differences(self) -> List[Tuple[int, float]]:
        return [(g.size, g.difference) for g in self.groups]

    @property
    def importance_order(self) -> List[str]:
        """Covariates from most to least important: never-dropped ones first,
        then the drops in reverse order"""
        return list(self.retained) + [record.dropped for record in reversed(self.drop_log)]

    def matched_units(self) -> List[int]:
        return sorted(m.unit for g in self.groups for m in g.members)
