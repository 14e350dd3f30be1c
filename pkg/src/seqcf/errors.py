"""Exception hierarchy shared across the package."""


class SeqcfError(Exception):
    """Base class for all package errors."""


class ConfigError(SeqcfError, ValueError):
    """Invalid configuration: unknown identifiers, bad ranges, inconsistent shapes."""


class EstimationError(SeqcfError):
    """The estimator has no data to work with (e.g. an arm never assigned)."""


class CalibrationError(SeqcfError):
    """Tuning or variance estimation cannot proceed on this log."""


class IntervalUnavailable(SeqcfError):
    """A prediction interval was requested for an entry without neighbors."""


class DegenerateEstimateWarning(UserWarning):
    """Emitted when a variance estimate is driven entirely by self-fallbacks."""
