"""Exception types shared across the package."""


class FormatError(ValueError):
    """Input file or directory does not follow the expected layout."""


class NumericalError(ArithmeticError):
    """A solver produced non-finite values or an inconsistent result."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
