"""Exception hierarchy shared by all analysis modules."""


class MarkovError(Exception):
    """Base class for errors raised by compactmarkov."""


class DomainError(MarkovError, ValueError):
    """A state, set or parameter lies outside the domain of an operation."""


class ChainSpecError(MarkovError, ValueError):
    """A chain description is malformed.

    ``field`` names the offending entry of the JSON document.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class PreconditionError(MarkovError):
    """An operation was called on an input it cannot handle (e.g. a reducible chain)."""


class SeriesDivisionError(MarkovError, ZeroDivisionError):
    pass


class EvaluationError(MarkovError, ArithmeticError):
    pass
