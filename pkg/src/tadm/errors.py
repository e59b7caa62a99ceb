"""Exception types shared across the package."""


class TadmError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(TadmError):
    """Operands have non-conformable shapes."""


class ConfigError(TadmError):
    """Invalid configuration value or malformed config file."""


class DomainError(TadmError):
    """Input outside the documented domain of an operation."""


class ContractError(TadmError):
    """A caller broke an internal invariant (frozen params, tape misuse)."""


class GenerationError(TadmError):
    """Phantom generation cannot satisfy its geometric invariants."""


class DataError(TadmError):
    """Dataset loading failed: missing file or malformed record."""


class CheckpointError(TadmError):
    """Checkpoint file is malformed or does not match the model."""


class MetricError(TadmError):
    """A metric is undefined for the given inputs."""
