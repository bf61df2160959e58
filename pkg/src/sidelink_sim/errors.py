"""Exception types shared across the simulator."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class NumericalDegeneracyError(ArithmeticError):
    """A computation would divide by (numerically) zero."""


class TableParseError(ValueError):
    """An L2S table file is malformed.

    ``location`` names the offending section, line or field.
    """

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)
