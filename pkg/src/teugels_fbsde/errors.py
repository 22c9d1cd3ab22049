"""Exception hierarchy shared by all modules."""


class TeugelsError(Exception):
    """Base class for every error raised by the package."""


# levy_model
class NonIntegrableMeasure(TeugelsError):
    """The Levy measure fails the integrability condition on min(1, z^2)."""


class ExponentialTailViolation(TeugelsError):
    """The exponential moment of the large jumps diverges at the declared alpha."""


class QuadratureFailure(TeugelsError):
    """Adaptive quadrature did not reach tolerance within the subdivision guard."""


# teugels_basis
class DegenerateMeasure(TeugelsError):
    """mu has no mass at all, so not even q_0 exists."""


class NumericalBreakdown(TeugelsError):
    """The Hankel moment matrix is indefinite beyond the rank tolerance."""


# path_engine
class UnsupportedMeasure(TeugelsError):
    """Path simulation was requested for a measure with a density part."""


# fbsde_problem
class NonFiniteData(TeugelsError):
    """A term of the data norm V0 is not finite."""


# solver
class RegressionSingular(TeugelsError):
    """Even the constant regression basis is rank deficient."""


class NoContraction(TeugelsError):
    """Picard ratios stayed >= 1; the horizon must be shrunk."""

    def __init__(self, message, ratios=None, distances=None):
        super().__init__(message)
        self.ratios = list(ratios or [])
        self.distances = list(distances or [])


class MaxIterExceeded(TeugelsError):
    """Picard iteration hit picard_max_iter without reaching the tolerance."""

    def __init__(self, message, ratios=None, distances=None):
        super().__init__(message)
        self.ratios = list(ratios or [])
        self.distances = list(distances or [])


class DeltaUnderflow(TeugelsError):
    """No contracting horizon was found above 1e-4 * T."""


class GridMismatch(TeugelsError):
    """Two solution triples live on different bundles or grids."""


# analysis
class HypothesisViolated(TeugelsError):
    """A theorem's hypothesis failed on a probe point."""


# cli
class ConfigError(TeugelsError):
    """Run configuration is malformed; the message carries the field path."""
