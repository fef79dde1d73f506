"""Exception hierarchy shared by all fewfit modules."""


class FewfitError(Exception):
    """Base class for all fewfit errors."""


class ShapeError(FewfitError):
    """Tensor shapes do not conform for the requested operation."""


class DomainError(FewfitError):
    """Math operation evaluated outside its domain (log/div of zero)."""


class ContractError(FewfitError):
    """An API precondition was violated by the caller."""


class ConfigError(FewfitError):
    """Invalid configuration value."""


class DataError(FewfitError):
    """Dataset content violates a requirement (missing class, bad label)."""


class SchemaError(DataError):
    """Input file does not match the expected schema."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IOError_(FewfitError):
    """File missing or unreadable."""


class FormatError(FewfitError):
    """Model file is corrupt or has an unsupported version."""


class TrainingDiverged(FewfitError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, batch, loss):
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}"
        )
        self.epoch = epoch
        self.batch = batch
