"""Exception hierarchy.

Everything derives from :class:`DefectSpecError` so the CLI can map data and
fit failures onto one exit path.
"""


class DefectSpecError(Exception):
    """Base class for all package errors."""

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self)}


class DomainError(DefectSpecError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(DefectSpecError, ArithmeticError):
    """A numerical procedure failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})

    def to_dict(self):
        d = super().to_dict()
        d["diagnostics"] = self.diagnostics
        return d


class TruncationError(NumericalError):
    """A truncated sum could not reach its tolerance within the hard cap."""


class SamplingError(DefectSpecError, ValueError):
    """Grid too coarse for the requested lineshape."""


class PeakNotFoundError(DefectSpecError, LookupError):
    """No peak rises above the prominence threshold."""


class DegenerateDesignError(DefectSpecError, ValueError):
    """Sample angles do not constrain the cos^2 model."""


class IncompleteCalibrationError(DefectSpecError, ValueError):
    """Calibration measurements are missing a reference angle or wavelength."""


class CalibrationError(NumericalError):
    """Calibration inversion did not converge."""


class UnreliableCorrectionError(DefectSpecError, ValueError):
    """Instrument visibility too low for a meaningful correction."""


class FitError(NumericalError):
    """A nonlinear fit failed or produced an unphysical result."""
