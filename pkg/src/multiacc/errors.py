"""Exception types shared across the package."""


class MultiaccError(Exception):
    """Base class for all errors raised by this package."""


class StructureError(MultiaccError, ValueError):
    """A pairing structure violates one of its invariants."""


class ParseError(MultiaccError, ValueError):
    """Malformed textual input.  ``pos`` is a character offset when known."""

    def __init__(self, message, pos=None):
        self.pos = pos
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)


class CapacityError(MultiaccError, OverflowError):
    """A brute-force routine was asked to exceed its enumeration bound."""


class BudgetExceeded(MultiaccError, RuntimeError):
    """The adaptive merge ran out of sample budget before its stopping rule held.

    ``state`` carries the partial loop state (samples taken, counts, estimate).
    """

    def __init__(self, message, state=None):
        self.state = state or {}
        super().__init__(message)


class EstimatorUndefined(MultiaccError, ZeroDivisionError):
    """An estimator's denominator vanished on the given input."""
