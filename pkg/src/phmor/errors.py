"""Exception and warning types raised by :mod:`phmor`."""


class PHMORError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(PHMORError, ValueError):
    pass


class StructureError(PHMORError):
    """A system failed structural validation.

    The failing :class:`~phmor.phcore.ValidationReport` is attached as
    ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SingularE(PHMORError):
    pass


class NotSPD(StructureError):
    pass


class GridMismatch(PHMORError, ValueError):
    pass


class SingularStep(PHMORError):
    pass


class OracleTooLarge(PHMORError):
    pass


class RankDeficient(PHMORError):
    pass


class NotNested(PHMORError):
    pass


class RankDeficientBasis(PHMORError):
    pass


class StructureLost(StructureError):
    pass


class SingularGram(PHMORError):
    pass


class NotPrefix(PHMORError):
    pass


class AllPointsSkipped(PHMORError):
    pass


class InitialStateNotInSpan(PHMORError):
    pass


class InvalidParameter(PHMORError, ValueError):
    pass


class ParseError(PHMORError):
    """Malformed MatrixMarket input; ``line`` is 1-based (0 if unknown)."""

    def __init__(self, line, reason, path=None):
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line}: {reason}")
        self.line = line
        self.reason = reason
        self.path = path


class DenseLimitExceeded(PHMORError):
    pass


class ConfigError(PHMORError, ValueError):
    pass


class NegativeValueWarning(UserWarning):
    """A series expected to hold norms contained negative entries."""


class PreconditionUnmet(UserWarning):
    """None of the sufficient initial-condition properties for the
    ALP/hierarchical equality holds; the deviation is reported only."""


class RigorViolation(PHMORError):
    """An emitted effectivity fell below ``1 - slack``."""


class StageError(PHMORError):
    """Failure inside one experiment stage; the original error is ``cause``."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
