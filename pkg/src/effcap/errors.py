"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: ValidationError -> 2,
NumericFailure -> 3, anything I/O related -> 4.
"""


class EffcapError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EffcapError):
    """Input violates a structural or schema constraint."""


class NumericFailure(EffcapError):
    """A numeric procedure could not produce a usable result."""


class MalformedDocument(ValidationError):
    pass


class NonTreeTopology(ValidationError):
    pass


class NoDriver(ValidationError):
    pass


class MultipleDrivers(ValidationError):
    pass


class NegativeElement(ValidationError):
    pass


class NonPhysicalMoments(NumericFailure):
    pass


class NoCrossing(NumericFailure):
    pass


class OutOfRangeLabel(ValidationError):
    pass


class MissingLabel(ValidationError):
    pass


class EmptySplit(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class HashMismatch(ValidationError):
    pass


class VersionUnsupported(ValidationError):
    pass


class FeatureOrderMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass
