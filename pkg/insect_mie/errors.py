"""
Exception hierarchy shared by every insect-mie stage.
"""

from typing import Optional


class MieError(Exception):
    """Base class for all pipeline errors"""


class ConfigInvalid(MieError):
    """A configuration value is outside its allowed range"""


class UsageError(MieError):
    """The command line could not be interpreted"""


class FrameTooSmall(MieError):
    """The frame is smaller than the blur kernel or the minimum frame size"""


class DimensionMismatch(MieError):
    """Frames combined in one operation differ in size"""


class InvalidBox(MieError):
    """A bounding box is degenerate or lies outside the frame"""


class EmptySequence(MieError):
    """No usable frame was found for a sequence"""


class UnparsableTimestamp(MieError):
    """A filename or manifest timestamp could not be parsed"""


class UnsortedInput(MieError):
    """Input expected in time order was not sorted"""


class NoGroundTruth(MieError):
    """A metric needs at least one annotation"""


class MalformedLine(MieError):
    """A line of an annotation or detection file has the wrong shape"""

    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        location = ""
        if path is not None:
            location = f"{path}:"
        if line_number is not None:
            location = f"{location}{line_number}: "
        elif location:
            location = f"{location} "
        super().__init__(f"{location}{message}")


class ValueOutOfRange(MalformedLine):
    """A normalized box value is outside [0, 1]"""


class ConfidenceOutOfRange(MalformedLine):
    """A detection confidence is outside [0, 1]"""
