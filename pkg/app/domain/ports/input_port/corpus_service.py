from abc import abstractmethod

from app.domain.ports.input_port.base_services import IBaseUseCase
from app.infrastructure.dto.config_schema import RunConfig


class ICorpusUseCase(IBaseUseCase):

    @abstractmethod
    def generate(self, cfg: RunConfig):
        """Generate, split and store the synthetic corpus."""
        pass

    @abstractmethod
    def load(self, cfg: RunConfig):
        pass
