"""Exception hierarchy shared by all modules."""


class LambdaWFError(Exception):
    """Base class for errors raised by lambdawf."""


class InvalidMeasure(LambdaWFError, ValueError):
    """A measure violates its construction invariants."""


class InvalidConfig(LambdaWFError, ValueError):
    """A simulation or CLI configuration violates a precondition."""


class DivergentIntegral(LambdaWFError, ArithmeticError):
    """Adaptive refinement towards an endpoint did not converge."""

    def __init__(self, message, endpoint=None, partial_sums=()):
        super().__init__(message)
        self.endpoint = endpoint
        self.partial_sums = tuple(partial_sums)


class InvalidIntegrand(LambdaWFError, ValueError):
    """The integrand produced NaN."""


class ZeroMass(LambdaWFError, ValueError):
    """A sampler was asked to draw from a measure with zero total weight."""


class KingmanUnsupported(LambdaWFError, ValueError):
    """The operation is undefined when the measure has an atom at 0."""
