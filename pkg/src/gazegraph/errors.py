"""Exception hierarchy shared by all gazegraph modules."""


class GazeGraphError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(GazeGraphError, ValueError):
    pass


class ContractError(GazeGraphError, ValueError):
    """A documented precondition of an operation was violated."""


class NumericError(GazeGraphError, ArithmeticError):
    pass


class EmptyInputError(GazeGraphError, ValueError):
    pass


class OrderingError(GazeGraphError, ValueError):
    pass


class CoverageError(GazeGraphError, ValueError):
    pass


class BoundsError(GazeGraphError, ValueError):
    pass


class VocabularyError(GazeGraphError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ""


class FormatError(GazeGraphError, ValueError):
    pass


class ConfigError(GazeGraphError, ValueError):
    pass
