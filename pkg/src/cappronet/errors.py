"""Exception types raised across the package."""


class CapsuleError(Exception):
    """Base class for all package errors."""


class ShapeError(CapsuleError, ValueError):
    """Operand dimensions do not line up."""


class SingularityError(CapsuleError, ArithmeticError):
    """A matrix that must be invertible (or positive definite) is not."""


class DivergenceError(CapsuleError, ArithmeticError):
    """An iteration or training run produced non-finite values.

    ``step`` is the offending step index when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class LabelError(CapsuleError, ValueError):
    """A class label is outside ``[0, num_classes)``."""


class InputError(CapsuleError, ValueError):
    """Invalid sizes, empty datasets, or bad hyperparameters."""


class ParseError(CapsuleError, ValueError):
    """Malformed file contents (CSV, IDX, config, model container)."""


class StateError(CapsuleError, RuntimeError):
    """Cached forward state does not match the object it is fed back into."""


class UnsupportedDimensionError(CapsuleError, ValueError):
    """Operation requires a specific capsule dimension."""
