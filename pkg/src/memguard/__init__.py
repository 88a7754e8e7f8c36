"""Neural dynamics models held inside per-cell intervals of a reference model."""
from .errors import ArtifactError, ConfigError, DomainError, InvariantError, MemguardError

__version__ = "0.1.0"

__all__ = ["ArtifactError", "ConfigError", "DomainError", "InvariantError", "MemguardError", "__version__"]
