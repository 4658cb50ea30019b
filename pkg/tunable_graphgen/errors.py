"""
Exception hierarchy for the tunable-graphgen package.

Validation failures derive from ValueError, operational failures from
RuntimeError, so callers that only know the builtin types still catch them.
"""

from typing import Any, Optional


class TunableGraphError(Exception):
    """Base class for all package errors."""


class UndefinedMetricError(TunableGraphError, ValueError):
    """A graph metric is not defined for the given graph."""

    def __init__(self, message: str, feature: Optional[str] = None):
        self.feature = feature
        if feature is not None:
            message = f"{feature}: {message}"
        super().__init__(message)


class NotEncodableError(TunableGraphError, ValueError):
    """The graph cannot be serialized as a DFS code."""


class InvalidCodeError(TunableGraphError, ValueError):
    """A DFS code violates its structural invariants."""

    def __init__(self, message: str, position: Optional[int] = None):
        self.position = position
        if position is not None:
            message = f"position {position}: {message}"
        super().__init__(message)


class EmptyCodeError(InvalidCodeError):
    """A DFS code or token sequence holds no edges."""


class CapacityError(TunableGraphError, ValueError):
    """A value does not fit the configured vocabulary."""


class IngestError(TunableGraphError, ValueError):
    """An edge-list file could not be parsed."""

    def __init__(self, message: str, path: Any = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = str(path) if path is not None else "<input>"
        if line_number is not None:
            location = f"{location}:{line_number}"
        super().__init__(f"{location}: {message}")


class SamplingExhaustedError(TunableGraphError, RuntimeError):
    """Subgraph sampling ran out of retries."""


class EmptyDatasetError(TunableGraphError, ValueError):
    """No usable graph is left to build a dataset from."""


class ConfigError(TunableGraphError, ValueError):
    """Configuration or tensor dimensions are inconsistent."""


class ContractError(TunableGraphError, ValueError):
    """Inputs to a loss do not satisfy its contract."""


class TrainingContractError(ContractError):
    """A training phase was entered with the wrong partitions frozen."""


class DivergenceError(TunableGraphError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, trace: Any = None):
        self.trace = trace
        super().__init__(message)


class EmptyEvaluationError(TunableGraphError, ValueError):
    """No graph could be scored."""


class CheckpointError(TunableGraphError, ValueError):
    """A checkpoint file is unreadable or malformed."""
