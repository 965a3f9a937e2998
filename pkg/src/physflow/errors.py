"""Exception hierarchy shared across the engine."""


class PhysflowError(Exception):
    """Base class for all engine errors."""


class NotFound(PhysflowError):
    """A required bundle file is missing."""


class MalformedBundle(PhysflowError):
    """Bundle contents are inconsistent (dimensions, overlapping masks, ...)."""


class InvalidDepth(PhysflowError):
    """Depth map is non-finite or non-positive where a mask needs it."""


class DegenerateObject(PhysflowError):
    """Object too small or too flat for its solver (singular rest shape, missing topology)."""


class NumericalBlowup(PhysflowError):
    """Simulation produced non-finite or absurd state.

    Carries the index of the offending object in ``object_index`` (-1 if unknown).
    """

    def __init__(self, message: str, object_index: int = -1):
        super().__init__(message)
        self.object_index = object_index


class NoTarget(PhysflowError):
    """A point force radius contains zero particles (warning-level)."""


class ShapeError(PhysflowError):
    """Tensor arguments have incompatible shapes."""


class InvalidAlpha(PhysflowError):
    """SDEdit mixing coefficient outside [0, 1]."""


class GeneratorError(PhysflowError):
    """A generator plugin failed; the stream falls back to the stub."""


class ProtocolError(PhysflowError):
    """Wire message has a bad magic number or otherwise violates the protocol."""


class Incomplete(PhysflowError):
    """Wire buffer ends before the message does; caller should read more bytes."""


class UnknownMessage(PhysflowError):
    """Message type not recognized; carries ``consumed`` so the stream can skip it."""

    def __init__(self, message: str, consumed: int, msg_type: int):
        super().__init__(message)
        self.consumed = consumed
        self.msg_type = msg_type


class IncompatibleSnapshot(PhysflowError):
    """Snapshot was produced by a different engine version."""
