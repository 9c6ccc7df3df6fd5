"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition."""


class InvalidStateError(RuntimeError):
    """An internal quantity left its admissible range (e.g. a zero filter)."""


class FeasibilityLossError(RuntimeError):
    """A block update could not keep the iterate inside the feasible set.

    ``block`` names the offending block when known.
    """

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class InfeasibleScenarioError(RuntimeError):
    """No feasible starting point exists for a scenario realization."""
