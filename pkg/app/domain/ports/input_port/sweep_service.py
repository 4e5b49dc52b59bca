from abc import abstractmethod
from typing import List

from app.domain.ports.input_port.base_services import IBaseUseCase


class ISweepUseCase(IBaseUseCase):

    @abstractmethod
    def run_sweep(self, lambdas: List[float], seeds: List[int]):
        """One independent search per (lambda, seed); failed runs are recorded, not raised."""
        pass
