"""Exception hierarchy shared by the impc modules."""

import numpy as np


class ImpcError(Exception):
    """Base class for all errors raised by impc."""


class DimensionError(ImpcError, ValueError):
    """Array shapes do not agree."""


class NonFiniteError(ImpcError, ValueError):
    """An input or result contains NaN or infinite entries."""


class SingularMatrixError(ImpcError, np.linalg.LinAlgError):
    """A factorization met a pivot below the singularity threshold."""


class NotPositiveDefiniteError(ImpcError, ValueError):
    pass


class InconsistentReferenceError(ImpcError, ValueError):
    """No steady input holds the plant at the requested reference."""


class UnsupportedProblemError(ImpcError, ValueError):
    """The problem has structure the requested routine cannot handle."""


class IntegrationError(ImpcError, RuntimeError):
    """Numerical integration produced a non-finite state."""


class DivergenceError(IntegrationError):
    """The closed loop left the divergence envelope.

    The partial simulation log, when available, is kept on ``log``.
    """

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class ConfigError(ImpcError, ValueError):
    """Invalid experiment configuration."""
