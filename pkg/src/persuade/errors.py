"""Exception hierarchy shared across the package."""


class PersuadeError(Exception):
    """Base class for all package errors."""


# instance validation
class InvalidInstance(PersuadeError, ValueError):
    """Raised when an instance description violates a type invariant."""


class NonSimplexPrior(InvalidInstance):
    """Prior entries do not form a probability vector."""


class ZeroMassState(InvalidInstance):
    """Prior puts zero (or negative) mass on some state."""


class DimensionMismatch(InvalidInstance):
    """Utility matrices or vectors have inconsistent shapes."""


class NotBayesPlausible(PersuadeError, ValueError):
    """A scheme's posterior mean differs from the prior."""


# receiver / geometry
class NonUniqueDefault(PersuadeError):
    """The prior-optimal receiver action is not unique."""


class NotInRegion(PersuadeError):
    """A posterior to be decomposed lies outside the target region."""


class InfeasibleProjection(PersuadeError):
    """The modified region used for a probe projection is empty."""


class RepairOutOfSimplex(PersuadeError):
    """A Bayes-plausibility correction posterior left the simplex."""


# LP
class NumericalFailure(PersuadeError, RuntimeError):
    """The simplex solver could not finish within its pivot budget."""


# algorithms
class InfeasibleBias(PersuadeError, ValueError):
    """Requested bias lies below the persuasion threshold."""


class Infeasible(PersuadeError):
    """The threshold-test LP at a candidate bias carries no non-default mass."""


class BudgetExhausted(PersuadeError):
    """A threshold test ran out of rounds before an informative realization."""


# harness
class MixedHorizons(PersuadeError, ValueError):
    """Series passed to aggregate do not share one horizon."""
