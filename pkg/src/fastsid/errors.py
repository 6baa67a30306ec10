"""Exception types shared across the package."""


class SidError(Exception):
    """Base class for every error raised by fastsid."""


class DimensionMismatch(SidError, ValueError):
    pass


class NonFiniteMatrix(SidError, ValueError):
    pass


class InsufficientData(SidError, ValueError):
    pass


class InvalidShape(SidError, ValueError):
    pass


class DuplicateKey(SidError, KeyError):
    pass


class MissingKey(SidError, KeyError):
    pass


class CorruptBlob(SidError, ValueError):
    pass


class ConvergenceFailure(SidError, ArithmeticError):
    pass


class EmptyInput(SidError, ValueError):
    pass


class OrderZero(SidError, ArithmeticError):
    """Every singular value of the projection fell below the order threshold."""


class RankDeficientGamma(SidError, ArithmeticError):
    pass


class IllConditionedRegressor(UserWarning):
    """Issued (not raised) when the least-squares regressor is badly conditioned."""


class InvalidParallelism(SidError, ValueError):
    pass


class CycleDetected(SidError, ValueError):
    pass


class DanglingDependency(SidError, ValueError):
    pass


class TemplateSyntaxError(SidError, ValueError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class SchemaError(SidError, ValueError):
    pass


class NoNodes(SidError, ValueError):
    pass


class TaskFailed(SidError, RuntimeError):
    def __init__(self, task_id, cause):
        super().__init__(f"task {task_id} failed: {cause!r}")
        self.task_id = task_id
        self.cause = cause


class DeadlockDetected(SidError, RuntimeError):
    pass


class InvalidPartition(SidError, ValueError):
    pass


class ZeroParallelTime(SidError, ZeroDivisionError):
    pass
