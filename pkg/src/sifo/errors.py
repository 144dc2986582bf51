"""Exception hierarchy shared across the package."""


class SifoError(Exception):
    """Base class for all package errors."""


class ConfigError(SifoError, ValueError):
    """Invalid experiment or model configuration."""


class NumericalError(SifoError, ArithmeticError):
    """A numerical routine could not produce a valid result."""


class RankDeficientError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class DegenerateCaptureError(NumericalError):
    """The channel has (numerically) no component inside the subspace."""


class CodebookMismatchError(SifoError, ValueError):
    """Fingerprints, models and memories measured with different codebooks."""
