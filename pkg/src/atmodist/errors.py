"""Exception hierarchy shared across the package."""


class AtmodistError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AtmodistError):
    """A config value is invalid or mutually inconsistent with another."""


class FormatError(AtmodistError):
    """On-disk data does not match its declared layout."""


class DegenerateDataError(AtmodistError):
    """Input data has no usable signal (e.g. zero variance channel)."""


class InputError(AtmodistError):
    """A runtime input (patch, batch, array) has the wrong shape or type."""


class TrainingDivergenceError(AtmodistError):
    """Training produced non-finite values; a last-good checkpoint may be attached."""

    def __init__(self, msg, last_good=None):
        super().__init__(msg)
        self.last_good = last_good


class IncompleteProfileError(AtmodistError):
    """A distance profile is missing samples for one or more lags."""

    def __init__(self, msg, missing_lags=()):
        super().__init__(msg)
        self.missing_lags = tuple(missing_lags)


class DegenerateProfileError(AtmodistError):
    """A distance profile cannot be calibrated (e.g. all-zero tail)."""


class StageError(AtmodistError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage
