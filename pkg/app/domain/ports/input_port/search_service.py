from abc import abstractmethod

from app.domain.corpus.generator import CorpusData
from app.domain.entities.model_spec import ModelSpec
from app.domain.entities.parameters import Parameters
from app.domain.ports.input_port.base_services import IBaseUseCase
from app.infrastructure.dto.config_schema import SearchConfig


class ISearchUseCase(IBaseUseCase):

    @abstractmethod
    def run_search(self, cfg: SearchConfig, spec: ModelSpec, teacher: Parameters, candidates: Parameters,
                   corpus: CorpusData):
        """Stage 2: optimize architecture logits only, then discretize."""
        pass
