"""Exception hierarchy shared across the pipeline."""


class DfsegError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(DfsegError):
    """Bad user input: malformed manifest, invalid config, shape mismatch."""


class LoadError(DfsegError):
    """A referenced file is missing or unreadable."""


class CheckpointError(DfsegError):
    """Checkpoint incompatible with the requested model configuration."""


class TrainingError(DfsegError):
    """Training aborted (empty data, divergence)."""
