"""Exception types shared across the package."""


class EdslError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(EdslError, ValueError):
    """Invalid input data or configuration.

    ``field`` optionally names the offending config entry (dotted path).
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class SingularPointError(EdslError, ValueError):
    """Evaluation requested exactly at a logarithmic singularity."""


class UnsupportedTermError(ValidationError):
    """A potential term is outside the supported class for this operation."""


class MissingIndexError(ValidationError):
    """An eigenvalue index needed by a truncated product is absent."""


class NumericalError(EdslError, RuntimeError):
    """A numerical procedure failed to meet its contract."""


class ToleranceError(NumericalError):
    """Step refinement stalled before the requested tolerance was reached."""


class PoleProximityError(NumericalError):
    """|sin theta| fell below the hard floor; the angle seed is unusable."""


class NoAdmissibleThetaError(NumericalError):
    """No angle seed on the search ray produced an acceptable margin."""


class ContourError(NumericalError):
    """The integrand stayed too close to zero on a counting contour."""


class RefinementError(NumericalError):
    """Root refinement did not converge inside the trust region."""


class StripMismatchError(NumericalError):
    """Strip winding counts could not be reconciled with located roots."""


class ChainOrderError(NumericalError):
    """The requested chain length exceeds the order of the zero."""


class AssumptionShiftError(NumericalError):
    """The spectral-parameter shift failed to move 0 off the spectrum."""
