"""Exception hierarchy shared across the package."""


class ErlformError(Exception):
    """Base class for all package errors."""


class StructuralError(ErlformError, ValueError):
    """Inputs disagree in shape: objective sets, task sets, widths."""


class UsageError(ErlformError, RuntimeError):
    """An operation was called in a state or mode it does not support."""


class SelectionError(ErlformError, ValueError):
    pass


class UnsupportedDimensionError(ErlformError, ValueError):
    pass


class TrainingDivergenceError(ErlformError, ArithmeticError):
    """Policy parameters became non-finite during training."""


class EvaluationError(ErlformError, ValueError):
    pass


class ConfigError(ErlformError, ValueError):
    pass
