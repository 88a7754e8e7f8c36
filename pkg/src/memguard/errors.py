class MemguardError(Exception):
    """Base class for package errors."""


class DomainError(MemguardError, ValueError):
    """Input outside the domain an operation accepts."""


class ConfigError(MemguardError, ValueError):
    """Inconsistent or missing configuration."""


class ArtifactError(MemguardError, OSError):
    """Missing, unreadable or mismatched artifact file."""


class InvariantError(MemguardError, AssertionError):
    """A guaranteed property failed to hold at runtime."""
