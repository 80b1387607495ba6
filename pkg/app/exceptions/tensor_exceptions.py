# exceptions/tensor_exceptions.py
from typing import Optional

from app.constants import EXIT_USAGE
from app.exceptions.custom_exceptions import SCDException


class CheckpointError(SCDException):
    """Raised when a checkpoint archive is unreadable, corrupted or incompatible"""
    def __init__(self, message: str = "Checkpoint could not be read", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)
