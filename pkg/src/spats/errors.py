"""Exception hierarchy shared by every spats module."""


class SpatsError(Exception):
    """Base class for all errors raised by spats."""


class InputError(SpatsError, ValueError):
    """Malformed input: wrong shapes, non-finite entries, invalid weights."""


class DimensionMismatch(InputError):
    pass


class NonFiniteInput(InputError):
    pass


class NegativeWeight(InputError):
    pass


class NumericError(SpatsError, ArithmeticError):
    """A well-formed problem that has no acceptable numerical answer."""


class SingularMatrix(NumericError):
    pass


class SingularFastBlock(NumericError):
    pass


class NoConvergence(NumericError):
    pass


class SpectrumOverlap(NumericError):
    pass


class NotStabilizable(NumericError):
    pass


class AsymmetryDrift(NumericError):
    pass


class PivotBreakdown(NumericError):
    pass


class LeaderUnreachable(NumericError):
    pass


class NonPositiveEigenvalue(NumericError):
    pass


class Infeasible(NumericError):
    pass


class Divergence(NumericError):
    """Simulated state norm exceeded the divergence guard."""


class StepTooLarge(Divergence):
    pass
