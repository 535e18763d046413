"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed or contract-violating input data."""


class AlignmentError(ValidationError):
    """An anchor character span covers no token."""


class ShapeError(ValueError):
    """Tensor operation applied to incompatible shapes."""


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


class CheckpointError(RuntimeError):
    """Checkpoint directory is missing, truncated, or corrupted."""


class MissingPrerequisiteError(RuntimeError):
    """A pipeline stage was invoked before the stage it depends on."""
