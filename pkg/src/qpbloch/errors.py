"""Exception hierarchy for qpbloch."""


class QPBlochError(Exception):
    """Base class for all errors raised by the package."""


class MalformedInputError(QPBlochError, ValueError):
    pass


class ModuleDetectionError(QPBlochError):
    """No integer representation of a frequency was found within the search bound."""


class DegenerateWindingError(QPBlochError):
    """The winding matrix maps a nonzero integer vector to (numerically) zero."""


class LiftMismatchError(QPBlochError):
    """A frequency of the coefficient is not of the form Lambda^T n."""


class CoercivityError(QPBlochError):
    pass


class ConsistencyError(QPBlochError):
    """Internal consistency check failed (Hermiticity, tensor symmetry, ...)."""


class SolverError(QPBlochError):
    pass


class CriticalityError(QPBlochError):
    """Finite-difference gradient of the first eigenvalue at zero is too large."""


class DegenerateStencilError(QPBlochError):
    """A Hessian stencil point hit a (near) degenerate first eigenvalue."""


class ContinuationError(QPBlochError):
    pass


class OutOfZoneError(QPBlochError, ValueError):
    """Quasimomentum outside the reduced zone [-1/2, 1/2)^d."""


class ResolutionError(QPBlochError, ValueError):
    """Sample grid too coarse for the requested computation."""
