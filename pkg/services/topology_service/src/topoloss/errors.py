"""Exceptions raised across the package.

Domain code raises these; the CLI turns them into exit codes and the API
turns them into HTTP status codes.
"""

from typing import Optional


class TopolossError(Exception):
    """Base class for every error raised by topoloss."""


class InvalidInputError(TopolossError, ValueError):
    """An argument violates a documented precondition."""


class SizeLimitError(InvalidInputError):
    """A brute-force oracle was asked to enumerate beyond its cap."""


class StaleConfigurationError(TopolossError, RuntimeError):
    """A frozen configuration no longer fits the values it is evaluated on."""


class NetworkStateError(TopolossError, RuntimeError):
    """Backward was requested without a matching forward pass."""


class NonFiniteLossError(TopolossError, ArithmeticError):
    def __init__(self, component: str, iteration: Optional[int] = None):
        self.component = component
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"Non-finite value in {component}{where}")


class DataIOError(TopolossError, OSError):
    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        field: Optional[str] = None,
    ):
        self.path = path
        self.line = line
        self.field = field
        context = []
        if path is not None:
            context.append(str(path))
        if line is not None:
            context.append(f"line {line}")
        if field is not None:
            context.append(f"field {field}")
        prefix = f"{', '.join(context)}: " if context else ""
        super().__init__(f"{prefix}{message}")
