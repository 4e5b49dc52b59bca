from abc import abstractmethod
from typing import Dict

from app.domain.entities.model_spec import HybridArch
from app.domain.ports.input_port.base_services import IBaseUseCase


class ISelectorUseCase(IBaseUseCase):

    @abstractmethod
    def select(self, method: str, budget: int):
        """Allocation of `budget` FULL layers by a selector baseline."""
        pass

    @abstractmethod
    def controlled_comparison(self, archs: Dict[str, HybridArch]):
        """Distill and evaluate every allocation under one shared configuration."""
        pass
