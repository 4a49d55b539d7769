"""Exception hierarchy shared by every module."""


class GnnSpaceError(Exception):
    """Base class for all domain errors raised by gnnspace."""


class ParameterError(GnnSpaceError, ValueError):
    """An argument is outside its documented domain."""


class ShapeError(GnnSpaceError, ValueError):
    """Tensor operands have incompatible shapes."""


class DomainError(GnnSpaceError, ValueError):
    """A quantity is undefined for the given input (e.g. path length of a disconnected graph)."""


class ConvergenceError(GnnSpaceError, RuntimeError):
    """An iterative method hit its iteration cap; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class PartialFillError(GnnSpaceError, RuntimeError):
    """Grid filling ran out of budget; ``unfilled`` maps bin -> missing count."""

    def __init__(self, message, unfilled=None, graph_set=None):
        super().__init__(message)
        self.unfilled = unfilled or {}
        self.graph_set = graph_set


class TaskFormatError(GnnSpaceError, ValueError):
    """A task file violates the task schema; ``pointer`` is a JSON pointer to the offending value."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class TaskConstructionError(GnnSpaceError, ValueError):
    pass


class UndefinedMetricError(GnnSpaceError, ValueError):
    """A statistic or metric is mathematically undefined for the input."""


class TrainingError(GnnSpaceError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DesignParseError(GnnSpaceError, ValueError):
    pass


class AggregationError(GnnSpaceError, ValueError):
    def __init__(self, message, missing=None):
        super().__init__(message)
        self.missing = missing or []


class IntegrityError(GnnSpaceError, ValueError):
    pass


class ConfigError(GnnSpaceError, ValueError):
    pass
