"""Exception types shared across the package."""


class VoxroomError(Exception):
    """Base class for all package-specific errors."""


class FormatError(VoxroomError):
    """File does not look like the format it was handed to."""


class UnsupportedError(VoxroomError):
    """Recognized format, but a feature outside the supported subset."""


class ShapeError(VoxroomError):
    """Inconsistent array/image dimensions."""


class EmptyArchiveError(VoxroomError):
    """Archive contains no usable image entries."""


class SizeError(VoxroomError):
    """Byte length disagrees with the declared geometry."""


class ParseError(VoxroomError):
    """Malformed text input (LUT CSV, OBJ, scenario files)."""


class ScenarioError(VoxroomError):
    """Simulation script references something that does not exist."""


class JoinError(VoxroomError):
    """Session join could not complete (broker unreachable, timeout)."""


class ProtocolError(VoxroomError):
    """Malformed wire frame or message."""
