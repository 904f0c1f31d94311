"""Exception types raised across the package."""


class MetawellError(Exception):
    """Base class for all package errors."""


class ConfigError(MetawellError):
    """Run configuration failed to parse or validate (CLI exit code 2)."""


class PotentialOverflow(MetawellError):
    """Potential evaluation produced a non-finite value."""


class LandscapeError(MetawellError):
    """Critical-point search or valley decomposition failed."""


class UnequalDepthError(LandscapeError):
    """Well minima do not share a common depth within tolerance."""


class DegeneracyError(LandscapeError):
    """Hessian determinant below tolerance at a minimum or saddle."""


class ResolutionError(MetawellError):
    """Grid too coarse for the requested epsilon (needs spacing <= sqrt(eps)/4)."""


class PreconditionError(MetawellError):
    """An operation's mathematical precondition does not hold on the inputs."""


class RangeError(MetawellError):
    """Right-hand side not in the range of the singular operator (sum c_i != 0)."""


class SingularityError(MetawellError):
    """Valley graph disconnected: null space larger than the constants."""


class SolverError(MetawellError):
    """Iterative linear solver stagnated or diverged."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class StabilityError(MetawellError):
    """Time step violates a scheme's stability/accuracy bound."""


class SchemeError(MetawellError):
    """A discrete structural bound (positivity, maximum principle) was violated."""
