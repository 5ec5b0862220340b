"""Exception hierarchy shared by the toolkit."""


class SoftFingerError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SoftFingerError, ValueError):
    """Invalid configuration or invalid model parameters."""


class InputDataError(SoftFingerError, ValueError):
    """Unreadable or malformed input data (trial CSVs, index files)."""


class NumericalError(SoftFingerError, ArithmeticError):
    """A numerical procedure failed (non-finite state, divergence, bad normalization)."""


class FitError(NumericalError):
    """A parameter fit failed to produce a valid optimum."""


class DegenerateError(NumericalError):
    """Data or model output has (near) zero variance, so the quantity is undefined."""
