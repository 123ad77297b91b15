"""Exception taxonomy shared across the package."""


class SdanetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(SdanetError):
    """An array has the wrong rank or a mismatched extent."""


class ConfigError(SdanetError):
    """A configuration value is out of its legal range."""


class ContractError(SdanetError):
    """An operation was called in a way its contract forbids."""


class LifecycleError(SdanetError):
    """A graph record was reused after backward already consumed it."""


class DegenerateRowError(SdanetError):
    """A masked softmax row has no surviving entries."""


class EvaluationError(SdanetError):
    """A checked computation produced a non-finite value."""


class FormatError(SdanetError):
    """A binary file is malformed, truncated, or out of range."""


class DomainError(SdanetError):
    """Image data lies outside the domain a metric is defined on."""


class TrainingDivergedError(SdanetError):
    """The training loss became non-finite."""
