"""Exception hierarchy shared by all bmlab modules."""


class BMError(Exception):
    """Base class for all library errors."""


class InvalidParameterError(BMError, ValueError):
    pass


class UnsupportedOrderError(InvalidParameterError):
    pass


class InvalidModelError(BMError, ValueError):
    """A spectral model violates its structural invariants."""


class SingularPointError(BMError, ValueError):
    """Density requested at its non-integrable singular frequency."""


class HypothesisError(BMError):
    """A theorem hypothesis (log-integrability, summability) fails."""


class LogIntegrabilityError(HypothesisError):
    pass


class DivergenceError(HypothesisError):
    """Partial sums of |rho|^d do not settle; sigma^2 is not finite."""

    def __init__(self, message, partial_sums=None):
        super().__init__(message)
        self.partial_sums = partial_sums


class TruncationError(BMError):
    def __init__(self, message, suggested_L=None, residual=None):
        super().__init__(message)
        self.suggested_L = suggested_L
        self.residual = residual


class EmbeddingError(BMError):
    """Circulant embedding has a materially negative eigenvalue."""


class NonPSDError(BMError):
    pass


class DegenerateSampleError(BMError, ValueError):
    pass


class GridError(BMError, ValueError):
    pass


class FormatError(BMError, ValueError):
    """Malformed file on disk."""
