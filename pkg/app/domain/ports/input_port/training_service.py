from abc import abstractmethod

from app.domain.corpus.generator import CorpusData
from app.domain.entities.model_spec import HybridArch, ModelSpec
from app.domain.entities.parameters import Parameters
from app.domain.ports.input_port.base_services import IBaseUseCase
from app.infrastructure.dto.config_schema import TrainConfig


class ITrainingUseCase(IBaseUseCase):

    @abstractmethod
    def train_teacher(self, corpus: CorpusData, spec: ModelSpec, cfg: TrainConfig, params: Parameters):
        """Cross-entropy training of the all-FULL teacher."""
        pass

    @abstractmethod
    def align(self, corpus: CorpusData, spec: ModelSpec, cfg: TrainConfig, teacher: Parameters):
        """Stage 1: fit every layer's linear candidate to the teacher's post-mixer states."""
        pass

    @abstractmethod
    def distill(self, corpus: CorpusData, spec: ModelSpec, cfg: TrainConfig, teacher: Parameters,
                student: Parameters, arch: HybridArch, tau: float = 1.0):
        """Stage 3: distill a discrete hybrid student from the teacher."""
        pass
