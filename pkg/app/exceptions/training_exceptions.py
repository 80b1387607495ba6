# exceptions/training_exceptions.py
from typing import Optional

from app.constants import EXIT_CHECK_FAILED, EXIT_DIVERGED
from app.exceptions.custom_exceptions import SCDException


class DivergenceError(SCDException):
    """Raised when the training loss stops being finite"""
    def __init__(self, message: str = "Training diverged", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_DIVERGED, data=data)


class GradCheckFailure(SCDException):
    """Raised when analytic and numeric gradients disagree"""
    def __init__(self, message: str = "Gradient check failed", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_CHECK_FAILED, data=data)
