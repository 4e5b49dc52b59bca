import binascii
import json
from enum import Enum
from functools import wraps
from typing import Callable, Optional

from app.utils.logger import log


class ErrorType(Enum):
    INTERNAL_ERROR = 1
    SHAPE_ERROR = 2
    VALIDATION_ERROR = 3
    CONFIG_ERROR = 4
    NUMERICAL_ERROR = 5
    FREEZE_VIOLATION = 6
    CHECKPOINT_IO_ERROR = 7
    CHECKPOINT_CORRUPT = 8
    CHECKPOINT_VERSION = 9


class AppError(Exception):
    def __init__(self, error_type: ErrorType, message: Optional[str] = None):
        self.error_type = error_type
        self.message = message
        super().__init__(message)

    def __str__(self) -> str:
        return f"{self.error_type.name}: {self.message}"


class ShapeError(AppError):
    def __init__(self, message: str):
        super().__init__(ErrorType.SHAPE_ERROR, message)


class FreezeViolationError(AppError):
    def __init__(self, message: str):
        super().__init__(ErrorType.FREEZE_VIOLATION, message)


class NumericalError(AppError):
    def __init__(self, message: str):
        super().__init__(ErrorType.NUMERICAL_ERROR, message)


class CheckpointError(AppError):
    """Raised for unreadable, corrupt or version-mismatched checkpoint files."""


def handle_checkpoint_error(func: Callable):
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CheckpointError as ckpt_err:
            log(f"CheckpointError caught in handler: {ckpt_err}", level="error")
            raise ckpt_err
        except (json.JSONDecodeError, binascii.Error, KeyError, ValueError, TypeError) as err:
            log(f"Corrupt checkpoint caught in handler: {err!r}", level="error")
            raise CheckpointError(ErrorType.CHECKPOINT_CORRUPT, f"corrupt checkpoint file: {err}")
        except OSError as err:
            log(f"OSError caught in handler: {err}", level="error")
            raise CheckpointError(ErrorType.CHECKPOINT_IO_ERROR, str(err))
    return wrapper


def handle_cli_error(func: Callable[..., int]):
    """Turns an AppError raised by a CLI command into its exit code."""
    @wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            return func(*args, **kwargs)
        except AppError as app_err:
            log(f"AppError caught at the command level: {app_err}", level="error")
            return app_err.error_type.value
    return wrapper
