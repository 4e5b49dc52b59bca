from typing import Dict

import numpy as np
import pandas as pd

from app.domain.ports.out_port.IArtifactRepository import IArtifactRepository
from app.utils.errors import AppError, ErrorType
from app.utils.logger import log

# fixed float format so reports are byte-stable across runs
CSV_FLOAT_FORMAT = "%.10g"


class ArtifactRepository(IArtifactRepository):

    def write_csv(self, frame: pd.DataFrame, name: str) -> str:
        target = self.ensure_parent(self.resolve(name))
        frame.to_csv(target, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        log(f"{len(frame)} rows written to {target}")
        return target

    def read_csv(self, name: str) -> pd.DataFrame:
        source = self.resolve(name)
        try:
            return pd.read_csv(source)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as err:
            raise AppError(ErrorType.VALIDATION_ERROR, f"cannot read table {source}: {err}")

    def write_text(self, text: str, name: str) -> str:
        target = self.ensure_parent(self.resolve(name))
        with open(target, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        return target

    def read_text(self, name: str) -> str:
        source = self.resolve(name)
        try:
            with open(source, encoding="utf-8") as handle:
                return handle.read()
        except OSError as err:
            raise AppError(ErrorType.VALIDATION_ERROR, f"cannot read {source}: {err}")

    def save_arrays(self, arrays: Dict[str, np.ndarray], name: str) -> str:
        target = self.ensure_parent(self.resolve(name))
        with open(target, "wb") as handle:
            np.savez(handle, **arrays)
        log(f"Arrays {sorted(arrays)} written to {target}")
        return target

    def load_arrays(self, name: str) -> Dict[str, np.ndarray]:
        source = self.resolve(name)
        try:
            with np.load(source) as archive:
                return {key: archive[key] for key in archive.files}
        except (OSError, ValueError) as err:
            raise AppError(ErrorType.VALIDATION_ERROR, f"cannot read arrays from {source}: {err}")
