from dataclasses import dataclass, field
from typing import List, Literal, Optional

import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from app.models.census import CensusOptions
from app.models.matching import MatchConfig
from app.utils.constants import ALL_ESTIMATORS, COMPONENT_ALIASES, COMPONENT_NAMES


class GraphSpec(BaseModel):
    model: Literal["er", "sbm", "edge_list"] = "er"
    n: int = Field(default=50, ge=1)
    q: float = Field(default=0.05, ge=0, le=1)
    block_sizes: List[int] = Field(default_factory=list)
    p_within: float = Field(default=0.3, ge=0, le=1)
    p_between: float = Field(default=0.05, ge=0, le=1)
    path: Optional[str] = None
    fixed: bool = False

    @model_validator(mode="after")
    def check_model(self):
        if self.model == "sbm":
            if not self.block_sizes or min(self.block_sizes) < 1:
                raise ValueError("sbm graphs need positive block sizes")
            self.n = sum(self.block_sizes)
        if self.model == "edge_list":
            if not self.path:
                raise ValueError("edge_list graphs need a path")
            self.fixed = True
        return self


class RandomizationSpec(BaseModel):
    design: Literal["complete", "cluster", "bernoulli"] = "complete"
    n_treated: Optional[int] = Field(default=None, ge=0)
    treated_per_block: Optional[int] = Field(default=None, ge=0)
    p: float = Field(default=0.5, ge=0, le=1)


class InterferenceSpec(BaseModel):
    kind: Literal["additive", "multiplicative", "misspecified", "none"] = "additive"
    gamma: List[float] = Field(default_factory=lambda: [0.0] * len(COMPONENT_NAMES))
    components: List[str] = Field(default_factory=list)
    alpha: float = 1.0
    misspecified_gamma: float = 0.0
    normalize: Optional[bool] = None
    scope: Literal["neighborhood", "graph"] = "neighborhood"
    # count a unit's own treatment inside its triangles, stars and dagger
    ego_label: bool = False

    @field_validator("components")
    @classmethod
    def resolve_aliases(cls, names: List[str]) -> List[str]:
        resolved = [COMPONENT_ALIASES.get(name, name) for name in names]
        unknown = [name for name in resolved if name not in COMPONENT_NAMES]
        if unknown:
            raise ValueError(f"unknown interference components: {unknown}")
        return resolved

    @property
    def z_scored(self) -> bool:
        if self.normalize is not None:
            return self.normalize
        return self.kind != "multiplicative"


class CovariateSpec(BaseModel):
    beta: float = 0.0
    levels: List[int] = Field(default_factory=lambda: [1, 2, 3])


class ErrorSpec(BaseModel):
    kind: Literal["homoskedastic", "heteroskedastic"] = "homoskedastic"
    sigma: float = Field(default=1.0, ge=0)


class FlameSpec(BaseModel):
    census: CensusOptions = Field(default_factory=CensusOptions)
    match: MatchConfig = Field(
        default_factory=lambda: MatchConfig(cross_fit_folds=5, stop_rule="pe-rise")
    )
    bins: Optional[int] = Field(default=None, ge=2)


class SimConfig(BaseModel):
    """One simulated experiment: graph model, design, outcome model, plan"""

    name: str = "custom"
    graph: GraphSpec = Field(default_factory=GraphSpec)
    randomization: RandomizationSpec = Field(default_factory=RandomizationSpec)
    interference: InterferenceSpec = Field(default_factory=InterferenceSpec)
    covariate: Optional[CovariateSpec] = None
    errors: ErrorSpec = Field(default_factory=ErrorSpec)
    tau_mean: float = 5.0
    tau_sd: float = Field(default=1.0, ge=0)
    fixed_true_ade: bool = False
    replications: int = Field(default=50, ge=1)
    seed: int = 0
    estimators: List[str] = Field(default_factory=lambda: list(ALL_ESTIMATORS))
    match_on_true_f: bool = False
    match_quality: bool = False
    sweep: Optional[List[float]] = None
    flame: FlameSpec = Field(default_factory=FlameSpec)

    @field_validator("estimators")
    @classmethod
    def known_estimators(cls, names: List[str]) -> List[str]:
        unknown = [name for name in names if name not in ALL_ESTIMATORS]
        if unknown:
            raise ValueError(f"unknown estimators: {unknown}")
        return names

    @model_validator(mode="after")
    def check_design(self):
        r = self.randomization
        if r.design == "complete" and r.n_treated is not None and r.n_treated > self.graph.n:
            raise ValueError(f"cannot treat {r.n_treated} of {self.graph.n} units")
        if r.design == "cluster" and self.graph.model != "sbm":
            raise ValueError("cluster randomization needs an sbm graph")
        if self.sweep is not None and self.interference.kind != "misspecified":
            raise ValueError("gamma sweeps apply to misspecified interference")
        return self


class ReplicationRecord(BaseModel):
    setting: str
    replication: int
    seed: int
    method: str
    true_ade: float
    estimate: Optional[float] = None
    abs_error: Optional[float] = None
    graph_distance: Optional[float] = None
    error: Optional[str] = None


@dataclass
class OutcomeDraw:
    y: "object"
    true_ade: float
    tau: "object"
    f: "object"
    components: Optional[pd.DataFrame] = None
    x: Optional["object"] = None


@dataclass
class ExperimentReport:
    config: SimConfig
    records: List[ReplicationRecord] = field(default_factory=list)
    summary: Optional[pd.DataFrame] = None

    def records_frame(self) -> pd.DataFrame:
        columns = list(ReplicationRecord.model_fields)
        return pd.DataFrame([r.model_dump() for r in self.records], columns=columns)
