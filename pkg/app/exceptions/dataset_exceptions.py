# exceptions/dataset_exceptions.py
from typing import Optional

from app.constants import EXIT_USAGE
from app.exceptions.custom_exceptions import SCDException


class FormatError(SCDException):
    """Raised when sample files disagree in extent or cannot be decoded"""
    def __init__(self, message: str = "Malformed sample", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)


class AnnotationConsistencyError(SCDException):
    """Raised when label1 != 0 and label2 != 0 disagree on some pixels"""
    def __init__(self, message: str = "Inconsistent change annotation", pixel_count: int = 0):
        self.pixel_count = pixel_count
        super().__init__(message=message, exit_code=EXIT_USAGE, data={"pixel_count": pixel_count})


class DatasetIOError(SCDException):
    def __init__(self, message: str = "Dataset I/O failed", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)


class GenerationError(SCDException):
    def __init__(self, message: str = "Synthetic scene generation failed", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)
