"""Exception hierarchy shared across the package."""


class BrepError(Exception):
    """Base class for every error raised by brepforge."""

    @property
    def code(self):
        return type(self).__name__

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


# topology construction
class MalformedPair(BrepError):
    """A pair row repeats the same ID."""


class EmptyTopology(BrepError):
    """No faces or edges present."""


class InvalidTopology(BrepError):
    """Topology fails C1-C3 validation."""


# serialization
class TooManyFaces(BrepError):
    pass


class SharedEdgeOverflow(BrepError):
    pass


class MalformedLength(BrepError):
    pass


class OpenLoop(BrepError):
    pass


# generation
class EmptyCorpus(BrepError):
    pass


class MaxRetriesExceeded(BrepError):
    pass


# geometry / numerics
class ParamOutOfRange(BrepError):
    pass


class TooFewSamples(BrepError):
    pass


class TooFewPoints(BrepError):
    pass


class DegenerateConfiguration(BrepError):
    pass


class BadRange(BrepError):
    pass


class StepOutOfRange(BrepError):
    pass


class NonFiniteState(BrepError):
    """NaN or Inf appeared during sampling."""


class InsufficientData(BrepError):
    pass


class StageOrderError(BrepError):
    pass


# assembly / metrics
class TopologyGeometryMismatch(BrepError):
    pass


class GapExceedsTolerance(BrepError):
    pass


class DegenerateSurface(BrepError):
    pass


class EmptySet(BrepError):
    pass


# corpus io
class BadSpec(BrepError):
    pass


class SchemaVersionMismatch(BrepError):
    pass


class InvalidRecord(BrepError):
    pass


class DecodeError(BrepError):
    """An edge-vertex token stream cannot be decoded."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class SelfUnion(DecodeError):
    """Both endpoints of one edge would meet at a single vertex."""


class EdgeReuse(DecodeError):
    pass


class FaceMismatch(DecodeError):
    pass


class LoopViolation(DecodeError):
    """A vertex would gain more than two incident edges inside one face."""


class ParseError(BrepError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column
