"""Exception types shared across the package."""


class AdjsetError(Exception):
    """Base class for all package errors."""


class InputError(AdjsetError, ValueError):
    """Malformed or inconsistent input (unknown nodes, overlapping sets, ...)."""


class ParseError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class CycleError(InputError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("directed cycle: " + " -> ".join(map(str, self.cycle)))


class ResourceError(AdjsetError, RuntimeError):
    """A search would exceed its configured size cap."""


class NumericError(AdjsetError, ArithmeticError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(f"{message} (columns: {', '.join(self.columns)})")
