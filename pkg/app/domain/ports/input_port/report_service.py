from abc import abstractmethod
from typing import List, Optional

from app.domain.entities.model_spec import HybridArch
from app.domain.ports.input_port.base_services import IBaseUseCase
from app.infrastructure.dto.reports_schema import SweepRecord


class IReportUseCase(IBaseUseCase):

    @abstractmethod
    def emit_report(self, records: List[SweepRecord], final_arch: Optional[HybridArch] = None):
        """CSV tables, allocation strips and the budget/KL chart of a sweep."""
        pass
