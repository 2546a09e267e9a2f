"""Exception hierarchy.

Every error raised for bad input derives from :class:`SuitMatrixError`; the
CLI maps those to exit code 2 and prints the class name.
"""


class SuitMatrixError(ValueError):
    """Base class for input and contract errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class LineError(SuitMatrixError):
    """An error tied to a line (and optionally a column) of an input file."""

    def __init__(self, line: int, column: str | None = None, detail: str = ""):
        self.line = line
        self.column = column
        where = f"line {line}" + (f", column {column}" if column else "")
        super().__init__(f"{where}: {detail}" if detail else where)


# workload
class MissingHeader(SuitMatrixError):
    pass


class BadColumnCount(LineError):
    pass


class UnknownEnum(LineError):
    pass


class NonPositiveValue(LineError):
    pass


class BadValue(LineError):
    pass


class BadMix(SuitMatrixError):
    pass


class InvalidArgument(SuitMatrixError):
    pass


# timemodel
class TooFewPoints(SuitMatrixError):
    pass


class SingularSystem(SuitMatrixError):
    pass


class ZeroVariance(SuitMatrixError):
    pass


class Degenerate(SuitMatrixError):
    pass


class MissingDistribution(SuitMatrixError):
    pass


# suitability
class PrefOutOfRange(SuitMatrixError):
    pass


class UnknownBaseline(SuitMatrixError):
    pass


# simcore
class EmptyCluster(SuitMatrixError):
    pass


class EtcGap(SuitMatrixError):
    pass


# metrics
class NoMatchedPairs(SuitMatrixError):
    pass


class EmptyTrace(SuitMatrixError):
    pass


class TooFewReps(SuitMatrixError):
    pass


# cli
class MissingInput(SuitMatrixError):
    pass
