from abc import abstractmethod

from app.domain.operators.model import HybridModel
from app.domain.ports.input_port.base_services import IBaseUseCase


class IEvaluationUseCase(IBaseUseCase):

    @abstractmethod
    def evaluate(self, name: str, model: HybridModel, teacher: HybridModel):
        """Held-out KL, next-token agreement, recall accuracy and budget of one model."""
        pass
