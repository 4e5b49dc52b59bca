from abc import ABC
from datetime import datetime, timezone

from app.utils.logger import log


class IBaseUseCase(ABC):
    """
    Base implementation for use cases.
    """

    def __init__(self, error_message: str = "Base use case error"):
        self.error_message = error_message

    def set_logging_headers(self, process: str):
        formatted_time = datetime.now(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
        chr = "-"
        log(chr * 100)
        log(f"{process} process at: {formatted_time} UTC")

    def log_progress(self, step: int, every: int, **values: float):
        if step % every == 0:
            log(" ".join([f"step={step}"] + [f"{key}={value:.6g}" for key, value in values.items()]))
