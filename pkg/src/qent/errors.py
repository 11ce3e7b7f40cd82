"""Exception types shared across the package."""


class QentError(Exception):
    """Base class for package-specific failures."""


class ShapeMismatchError(QentError, ValueError):
    pass


class DimensionMismatchError(QentError, ValueError):
    pass


class NonSquareError(QentError, ValueError):
    pass


class NotHermitianError(QentError, ValueError):
    pass


class NotUnitaryError(QentError, ValueError):
    pass


class NoConvergenceError(QentError, RuntimeError):
    pass


class InvalidDensityMatrixError(QentError, ValueError):
    pass


class ParamOutOfRangeError(QentError, ValueError):
    pass


class DegenerateDrawError(QentError, RuntimeError):
    pass


class RejectionBudgetExceededError(QentError, RuntimeError):
    pass


class UnsupportedDimensionError(QentError, ValueError):
    pass


class BatchTooSmallError(QentError, ValueError):
    pass


class DisconnectedGraphError(QentError, RuntimeError):
    pass


class UninitializedParametersError(QentError, RuntimeError):
    pass


class DivergedLossError(QentError, RuntimeError):
    pass


class DegenerateBranchError(QentError, RuntimeError):
    pass


class NoFeasibleStateError(QentError, RuntimeError):
    pass


class StorageError(QentError, IOError):
    pass
