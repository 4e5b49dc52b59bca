from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from app.domain.entities.base_model import BaseDomainModel
from app.domain.entities.model_spec import HybridArch, ModelSpec
from app.domain.entities.parameters import Parameters
from app.utils.constants import CHECKPOINT_FORMAT_VERSION


class CheckpointMetadata(BaseDomainModel):
    stage: str
    step: int = 0
    seed: int = 0
    t_arch: Optional[float] = None
    candidate_space: Optional[str] = None


@dataclass
class Checkpoint:
    model_spec: ModelSpec
    parameters: Parameters
    metadata: CheckpointMetadata
    arch: Optional[HybridArch] = None
    alpha: Dict[int, np.ndarray] = field(default_factory=dict)
    format_version: int = CHECKPOINT_FORMAT_VERSION
