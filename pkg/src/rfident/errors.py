"""Exception hierarchy.

Everything raised on bad input derives from ``ValidationError`` so the CLI can
map it to exit code 1; I/O problems derive from ``OSError`` (exit code 2).
"""


class RfidentError(Exception):
    pass


class ValidationError(RfidentError, ValueError):
    pass


# emission synthesis
class BandExceedsNyquist(ValidationError):
    pass


class NonPositiveDuration(ValidationError):
    pass


class SampleRateMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


# spectral pipeline
class WrongChunkLength(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


# dataset
class MalformedLine(ValidationError):
    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class OutOfCanvas(ValidationError):
    pass


class BadRatios(ValidationError):
    pass


class IoFailure(RfidentError, OSError):
    pass


# detector / evaluator
class TooFewBoxes(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NoGroundTruth(ValidationError):
    pass


# runtime
class FrameError(ValidationError):
    pass


class BadMagic(FrameError):
    pass


class TruncatedPayload(FrameError):
    pass


class VersionUnsupported(FrameError):
    pass


class SourceExhausted(RfidentError):
    """Clean end of a sample source."""


class QueueOverflowPolicyViolation(RfidentError):
    def __init__(self, dropped, stats=None):
        super().__init__(f"{dropped} frame(s) dropped under drop policy")
        self.dropped = dropped
        self.stats = stats
