"""Exception hierarchy shared by the geometry, encoding and problem modules."""


class QMOError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(QMOError, ValueError):
    """An array has the wrong shape for the manifold or operator it meets."""


class UsageError(QMOError, ValueError):
    """Operands are individually valid but cannot be combined."""


class PreconditionError(QMOError, ValueError):
    """A documented numerical precondition is violated."""


class ManifoldMembershipError(PreconditionError):
    """A matrix does not satisfy the constraint of its manifold."""


class DegenerateStepError(QMOError, ArithmeticError):
    """A retraction would divide by (numerically) zero."""


class ZeroMatrixError(QMOError, ValueError):
    """The zero matrix cannot be encoded as a normalized state."""


class CorruptedStateError(QMOError, ValueError):
    """A statevector carries amplitude outside its logical block."""


class SentinelStateError(QMOError, ValueError):
    """A zero-tangent sentinel state was passed where a real state is required."""
