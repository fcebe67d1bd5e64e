"""
Error types for the H-NP toolkit.
Every error carries a stable machine-readable code so the CLI can turn it into a JSON error object.
"""

from typing import Dict, Any


class HnpError(Exception):
    """Base class for all toolkit errors."""

    code = "HNP_ERROR"
    exit_status = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used in CLI error output."""
        payload = {"code": self.code, "message": self.message}
        payload.update(self.context)
        return payload


class InvalidArgumentError(HnpError, ValueError):
    code = "INVALID_ARGUMENT"
    exit_status = 2


class ConfigError(HnpError):
    code = "CONFIG_ERROR"
    exit_status = 2


class NoFeasibleRankError(HnpError):
    """Raised when no order statistic satisfies v(k, n, alpha) <= delta."""

    code = "NO_FEASIBLE_RANK"
    exit_status = 3


class InfeasibleSplitError(HnpError):
    """Raised when a threshold subset is below the minimum sample size."""

    code = "INFEASIBLE_SPLIT"
    exit_status = 4

    def __init__(self, message: str, class_label: int, **context: Any):
        super().__init__(message, class_label=class_label, **context)
        self.class_label = class_label


class DatasetParseError(HnpError):
    code = "PARSE_ERROR"
    exit_status = 5

    def __init__(self, message: str, line: int = None, **context: Any):
        super().__init__(message, line=line, **context)
        self.line = line


class ReportIOError(HnpError):
    code = "IO_ERROR"
    exit_status = 6

    def __init__(self, message: str, path: str, **context: Any):
        super().__init__(message, path=str(path), **context)
        self.path = str(path)
