"""Exception hierarchy shared by the whole package.

Two broad families matter for the CLI exit codes: ConfigError (bad
parameters, exit 2) and DataError (bad or missing input data, exit 3).
"""


class BellrmError(Exception):
    pass


class ConfigError(BellrmError):
    """Invalid configuration value or combination."""


class UnsupportedModelError(ConfigError):
    """Operation called with a model kind it does not apply to."""


class DataError(BellrmError):
    """Input data is missing, malformed or inconsistent."""


class StreamOrderError(DataError):
    """Event stream is not time-ordered."""


class IntegrityError(DataError):
    """A binary file failed validation; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class InsufficientLengthError(DataError):
    """Sequence too short (or parameters too large) for a statistical test."""


class UndefinedStatisticError(DataError):
    """Estimator called on an empty selection (no records, no sequences)."""


class IncompleteSettingsError(DataError):
    """CHSH estimate requested but a settings pair has no records."""
