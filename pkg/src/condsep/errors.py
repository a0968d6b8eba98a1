"""Exception types shared across the package."""


class CondsepError(Exception):
    """Base class for package errors."""


class DomainError(CondsepError, ValueError):
    """An argument is outside the operation's domain (bad shape, value, pairing)."""


class ConfigurationError(CondsepError, ValueError):
    """A config is internally inconsistent or missing a required piece."""


class IngestionError(CondsepError, RuntimeError):
    """A corpus or RIR manifest record could not be ingested."""


class DegenerateInputError(CondsepError, ValueError):
    """A signal with no usable energy reached an operation that needs some."""


class LayoutVersionError(CondsepError, RuntimeError):
    """A checkpoint or manifest was written under a different attribute layout."""


class TrainingDiverged(CondsepError, RuntimeError):
    """Training hit a non-finite loss or gradient."""
