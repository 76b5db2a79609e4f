"""Exception hierarchy for the triage pipeline."""


class TriageError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(TriageError, ValueError):
    """Input or configuration failed validation (CLI exit code 1)."""


class ConfigError(ValidationError):
    pass


class MissingColumn(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class BadFraction(ValidationError):
    pass


class UnlabeledRecord(ValidationError):
    pass


class EmptyWindow(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class EmptyTrainingSet(ValidationError):
    pass


class TooFewWindows(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class UnknownToken(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SteppedPastEnd(TriageError, RuntimeError):
    """The environment was stepped after its last window."""


class BackendUnavailable(TriageError, RuntimeError):
    """An external analyst backend could not be reached."""


class MissingArtifact(TriageError, FileNotFoundError):
    """A pipeline stage needs a file an earlier stage should have written."""
