"""Exception hierarchy shared by every frekoo module."""


class FrekooError(Exception):
    """Base class for all package errors."""


class InvalidInputError(FrekooError, ValueError):
    """Input data violates a precondition (non-finite values, too short, empty)."""


class InvalidConfigError(FrekooError, ValueError):
    """A hyperparameter or configuration value is out of range or missing."""


class ShapeError(FrekooError, ValueError):
    """Array dimensions do not compose."""


class TrainingDivergedError(FrekooError, RuntimeError):
    """The joint objective became non-finite or exceeded the divergence guard."""

    def __init__(self, epoch, value):
        self.epoch = epoch
        self.value = value
        super().__init__(f"training diverged at epoch {epoch}: total loss = {value!r}")


class IngestionError(FrekooError, ValueError):
    """A CSV file could not be turned into a domain sequence."""


class DatasetUnavailableError(FrekooError, FileNotFoundError):
    """An external dataset is configured but its file is not present."""
