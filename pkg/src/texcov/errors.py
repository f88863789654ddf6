"""Exception types shared across the package."""


class TexcovError(Exception):
    """Base class for errors raised by texcov."""


class FormatError(TexcovError, ValueError):
    """A file is not in a supported format or is malformed."""


class NotPositiveDefiniteError(TexcovError, ValueError):
    """A matrix expected to be SPD has an eigenvalue at or below the floor."""


class DegenerateDataError(TexcovError, ValueError):
    """The data cannot support the requested estimate (e.g. every subset singular)."""


class ConvergenceError(TexcovError, RuntimeError):
    """An iterative procedure stopped before meeting its tolerance.

    Attributes
    ----------
    residual : float
        The last residual observed, when meaningful.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConfigError(TexcovError, ValueError):
    """Invalid run configuration or model/pipeline mismatch."""
