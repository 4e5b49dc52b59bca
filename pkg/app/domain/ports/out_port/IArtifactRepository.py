from abc import abstractmethod
from typing import Dict

import numpy as np
import pandas as pd

from app.domain.ports.out_port.base_file_repository import IBaseFileRepository


class IArtifactRepository(IBaseFileRepository):

    @abstractmethod
    def write_csv(self, frame: pd.DataFrame, name: str) -> str:
        pass

    @abstractmethod
    def read_csv(self, name: str) -> pd.DataFrame:
        pass

    @abstractmethod
    def write_text(self, text: str, name: str) -> str:
        pass

    @abstractmethod
    def read_text(self, name: str) -> str:
        pass

    @abstractmethod
    def save_arrays(self, arrays: Dict[str, np.ndarray], name: str) -> str:
        pass

    @abstractmethod
    def load_arrays(self, name: str) -> Dict[str, np.ndarray]:
        pass
