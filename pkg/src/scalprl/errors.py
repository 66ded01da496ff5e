"""Exception types raised across the package."""


class ScalpError(Exception):
    """Base class for every domain error."""


class DataError(ScalpError):
    """Input data violates a contract (maps to CLI exit code 3)."""


class MalformedRow(DataError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class IoFailure(DataError):
    pass


class NonMonotoneTime(DataError):
    pass


class EmptyStream(DataError):
    pass


class NonPositiveBase(DataError, ValueError):
    pass


class InvalidFloat(DataError, ValueError):
    pass


class InsufficientHistory(DataError):
    pass


class InsufficientFuture(DataError):
    pass


class EpisodeTooShort(DataError):
    pass


class OutOfWindow(DataError):
    pass


class TooFewEpisodes(DataError):
    pass


class WrongAgent(ScalpError):
    pass


class SteppedAfterDone(ScalpError):
    pass


class ShapeMismatch(ScalpError, ValueError):
    pass


class NonFiniteLoss(ScalpError, FloatingPointError):
    pass


class TrainingError(ScalpError):
    """Training stage failure (maps to CLI exit code 4)."""


class EmptyDataset(TrainingError):
    pass


class EmptyBatch(TrainingError):
    pass


class MissingPretrain(TrainingError):
    pass


class EmptyTrainSet(TrainingError):
    pass


class MetricsError(ScalpError, ValueError):
    pass


class EmptyResults(MetricsError):
    pass


class SigmaZero(MetricsError):
    pass


class ZeroDrawdown(MetricsError):
    pass


class ConfigError(ScalpError):
    """Bad configuration (maps to CLI exit code 2)."""
