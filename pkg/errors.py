"""
Exceptions raised by the magtraj modules.

Library code raises these; magtraj.py catches MagtrajError and maps it to exit code 2.
"""


class MagtrajError(Exception):
    """Base class for every data or numeric failure."""


class DegenerateInput(MagtrajError):
    pass


class InvalidScale(MagtrajError):
    pass


class NumericallySingular(MagtrajError):
    pass


class EmptyCurve(MagtrajError):
    pass


class InsufficientPoints(MagtrajError):
    pass


class NonPositiveMagnitude(MagtrajError):
    pass


class DegenerateSlope(MagtrajError):
    """The PH0 regression slope is >= 1, so alpha / (1 - slope) is not a dimension."""


class InvalidAlpha(MagtrajError):
    pass


class InvalidConfig(MagtrajError):
    pass


class InsufficientRecords(MagtrajError):
    pass


class InvalidInputs(MagtrajError):
    pass


class OutOfRange(MagtrajError):
    pass


class DownloadFailed(MagtrajError):
    pass


class DivergedLoss(MagtrajError):
    def __init__(self, iteration, loss):
        super().__init__(f"training loss became {loss} at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


class MalformedFile(MagtrajError):
    """A point-cloud, curve or trajectory file could not be decoded."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MalformedIdx(MalformedFile):
    pass


class IllConditionedWarning(UserWarning):
    """Similarity matrix condition estimate above the warning threshold."""
