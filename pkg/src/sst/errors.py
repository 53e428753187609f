"""Exception hierarchy.

Every error raised by the package derives from :class:`SSTError`. The three
intermediate classes map onto CLI exit codes: validation problems exit with 2,
numerical/runtime failures with 3 and I/O failures with 4.
"""


class SSTError(Exception):
    exit_code = 3


class ValidationError(SSTError, ValueError):
    exit_code = 2


class NumericalError(SSTError, RuntimeError):
    exit_code = 3


class IoFailure(SSTError, OSError):
    exit_code = 4


# signal containers / windowing
class NonDivisibleLength(ValidationError):
    pass


class NonIntegralWindow(ValidationError):
    pass


class MissingWindow(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


# spectral estimation
class SegmentTooLong(ValidationError):
    pass


class TooFewSegments(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


# FID
class DimensionMismatch(ValidationError):
    pass


class TooFewWindows(ValidationError):
    pass


# structures
class InvalidConfig(ValidationError):
    pass


class UnknownElement(ValidationError):
    pass


class SingularSystem(NumericalError):
    pass


class UnstableIntegration(NumericalError):
    pass


# training / translation
class DomainMismatch(ValidationError):
    pass


class DomainEmpty(ValidationError):
    pass


class StateMismatch(ValidationError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, message, iteration=None, records=None):
        super().__init__(message)
        self.iteration = iteration
        self.records = records if records is not None else []


# modal comparison
class ZeroVector(ValidationError):
    pass


class NonPositiveReference(ValidationError):
    pass
