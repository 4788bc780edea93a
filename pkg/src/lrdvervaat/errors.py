"""Exception types raised across the package."""


class LRDError(Exception):
    """Base class for all package errors."""


class InvalidSpec(LRDError, ValueError):
    """Model parameters outside their admissible range (e.g. tau*D >= 1)."""


class NonEmbeddable(LRDError):
    """Circulant embedding has too much negative spectral mass and repair is off."""


class RegionUnsolved(LRDError):
    """The level set {G <= x} could not be resolved into an interval."""


class RankNotFound(LRDError):
    """No nonvanishing Hermite coefficient up to the search cap."""


class EvaluationDomain(LRDError, ValueError):
    """A density or its derivative is not evaluable where it was requested."""


class EmptyPrefix(LRDError, ValueError):
    """A quantile was requested for an empty prefix ([nt] = 0)."""


class EmptyInterval(LRDError):
    """No integer p satisfies the moment-order bounds."""


class NonPositiveValue(LRDError, ValueError):
    """Log-log regression received a value <= 0."""


class ConfigError(LRDError, ValueError):
    """Invalid run configuration."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
