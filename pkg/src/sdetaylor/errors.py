"""Exception hierarchy shared by all modules."""


class SDETaylorError(Exception):
    """Base class for every error raised by this package."""


class ParseError(SDETaylorError, ValueError):
    """Malformed input text.  ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.message = message
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnknownVariable(ParseError):
    pass


class SubscriptError(ParseError, IndexError):
    """Stochastic index subscripts in a bracket string are not dense 1..K."""


class DomainError(SDETaylorError, ArithmeticError):
    """A function was evaluated outside its real domain (log/sqrt of a negative, 1/0)."""


class CapExceeded(SDETaylorError, ValueError):
    def __init__(self, requested: int, cap: int, what: str = "order"):
        self.requested = requested
        self.cap = cap
        super().__init__(f"{what} {requested} exceeds hard cap {cap}")


class DimensionError(SDETaylorError, ValueError):
    pass


class CalculusError(SDETaylorError, ValueError):
    pass


class InsufficientGrid(SDETaylorError, ValueError):
    pass


class NumericalBlowup(SDETaylorError, ArithmeticError):
    def __init__(self, path: int, step: int, value: float):
        self.path = path
        self.step = step
        self.value = value
        super().__init__(f"path {path} reached |X|={value:.3g} at step {step}")
