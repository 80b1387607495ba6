# exceptions/custom_exceptions.py
from typing import Optional

from app.constants import EXIT_USAGE


class SCDException(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_USAGE, data: Optional[dict] = None):
        self.message = message
        self.exit_code = exit_code
        self.data = data
        super().__init__(self.message)


class ConfigError(SCDException):
    def __init__(self, message: str = "Invalid configuration", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)


class DimensionError(SCDException):
    def __init__(self, message: str = "Incompatible tensor dimensions", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)


class GeometryError(SCDException):
    def __init__(self, message: str = "Invalid spatial geometry", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)


class LabelError(SCDException):
    def __init__(self, message: str = "Label out of range", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)


class StateError(SCDException):
    def __init__(self, message: str = "Operation not allowed in current state", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)


class UndefinedInputError(SCDException):
    def __init__(self, message: str = "Metric undefined for empty input", data: Optional[dict] = None):
        super().__init__(message=message, exit_code=EXIT_USAGE, data=data)
