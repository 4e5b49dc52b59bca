from abc import abstractmethod

from app.domain.ports.input_port.base_services import IBaseUseCase
from app.infrastructure.dto.config_schema import RunConfig


class IPipelineUseCase(IBaseUseCase):

    @abstractmethod
    def run_pipeline(self, cfg: RunConfig, with_sweep: bool = True):
        """gen-corpus, train-teacher, align, (sweep,) search, distill and eval in one call."""
        pass
