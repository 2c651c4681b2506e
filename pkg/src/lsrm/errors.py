"""Exception types raised across the package."""


class LSRMError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(LSRMError, ValueError):
    pass


class DimensionMismatch(LSRMError, ValueError):
    pass


class NonpositiveVariance(LSRMError, ValueError):
    pass


class InvalidDegreesOfFreedom(LSRMError, ValueError):
    pass


class NonpositiveHyperparameter(LSRMError, ValueError):
    pass


class NonstationaryCoefficients(LSRMError, ValueError):
    pass


class LagOutOfRange(LSRMError, IndexError):
    pass


class ConfigInvalid(LSRMError, ValueError):
    pass


class DesignInvalid(LSRMError, ValueError):
    pass


class EmptyChain(LSRMError, ValueError):
    pass


class ChainTooShort(LSRMError, ValueError):
    pass


class ParseError(LSRMError, ValueError):
    """Malformed input file; message names the offending row/column."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateTriple(ParseError):
    pass


class SelfLoop(ParseError):
    pass


class RaggedTime(ParseError):
    pass


class SamplerFailure(LSRMError, RuntimeError):
    """A numerical failure inside a chain; carries the state at failure."""

    def __init__(self, message, state=None, scan=None):
        super().__init__(message)
        self.state = state
        self.scan = scan
