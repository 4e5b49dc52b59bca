from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np
from pydantic import Field, model_validator

from app.domain.entities.base_model import BaseDomainModel
from app.domain.entities.model_spec import HybridArch, OperatorKind


class CandidateSpace(str, Enum):
    BINARY = "binary"
    TRI = "tri"

    @property
    def operators(self) -> Tuple[OperatorKind, ...]:
        if self is CandidateSpace.BINARY:
            return (OperatorKind.FULL, OperatorKind.LINEAR)
        return (OperatorKind.FULL, OperatorKind.WINDOW, OperatorKind.LINEAR)


class CostVector(BaseDomainModel):
    """
    Relative per-layer attention cost: FULL=1, WINDOW=w/T, LINEAR=0.
    The binary space has no WINDOW entry.
    """

    space: CandidateSpace
    window_ratio: float = Field(ge=0.0, le=1.0)

    @classmethod
    def for_window(cls, space: CandidateSpace, window: int, seq_len: int) -> "CostVector":
        return cls(space=space, window_ratio=min(window, seq_len) / seq_len)

    def cost_of(self, kind: OperatorKind) -> float:
        return {OperatorKind.FULL: 1.0, OperatorKind.WINDOW: self.window_ratio, OperatorKind.LINEAR: 0.0}[kind]

    @property
    def operators(self) -> Tuple[OperatorKind, ...]:
        return self.space.operators

    def as_array(self) -> np.ndarray:
        return np.array([self.cost_of(kind) for kind in self.operators])


@dataclass
class ArchState:
    """
    Architecture logits of the searchable layers. Layer 0 is held FULL during
    search and owns no logits.
    """

    alpha: Dict[int, np.ndarray]
    t_arch: float
    space: CandidateSpace
    n_layers: int

    @classmethod
    def initial(cls, n_layers: int, space: CandidateSpace, t_arch: float) -> "ArchState":
        size = len(space.operators)
        return cls(alpha={layer: np.zeros(size) for layer in range(1, n_layers)},
                   t_arch=t_arch, space=space, n_layers=n_layers)

    def __post_init__(self):
        if self.t_arch <= 0:
            raise ValueError(f"T_arch must be positive, got {self.t_arch}")
        if 0 in self.alpha:
            raise ValueError("layer 0 is fixed during search and cannot own architecture logits")
        for layer, logits in self.alpha.items():
            if logits.shape != (len(self.space.operators),) or not np.all(np.isfinite(logits)):
                raise ValueError(f"alpha of layer {layer} must be a finite vector of size {len(self.space.operators)}")

    @property
    def searchable_layers(self) -> List[int]:
        return sorted(self.alpha)

    @staticmethod
    def parameter_name(layer: int) -> str:
        return f"alpha.{layer}"

    def copy(self) -> "ArchState":
        return ArchState(alpha={layer: logits.copy() for layer, logits in self.alpha.items()},
                         t_arch=self.t_arch, space=self.space, n_layers=self.n_layers)


class LayerRouting(BaseDomainModel):
    layer: int
    entropy: float
    top1: float
    margin: float


class RoutingDiagnostics(BaseDomainModel):
    layers: List[LayerRouting] = Field(default_factory=list)
    avg_entropy: float = 0.0
    avg_top1: float = 0.0
    avg_margin: float = 0.0
    ambiguous_count: int = 0

    @model_validator(mode="after")
    def check_counts(self) -> "RoutingDiagnostics":
        if self.ambiguous_count > len(self.layers):
            raise ValueError("ambiguous_count cannot exceed the number of searchable layers")
        return self


@dataclass
class SearchRecord:
    step: int
    l_kl: float
    l_cost: float
    l_search: float
    t_arch: float

    def as_row(self) -> dict:
        return {"step": self.step, "L_KL": self.l_kl, "L_cost": self.l_cost,
                "L_search": self.l_search, "T_arch": self.t_arch}


@dataclass
class SearchResult:
    state: ArchState
    arch: HybridArch
    diagnostics: RoutingDiagnostics
    log: List[SearchRecord] = field(default_factory=list)
