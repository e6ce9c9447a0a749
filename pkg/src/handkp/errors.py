"""Exception hierarchy shared across the package."""


class HandkpError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HandkpError, ValueError):
    """A layer, network, or strategy was configured inconsistently."""


class InputError(HandkpError, ValueError):
    """Caller passed data that violates an operation's contract."""


class FormatError(HandkpError, ValueError):
    """A file (annotation record, weight archive) is malformed."""


class ArchiveCorruptionError(FormatError):
    """Weight archive checksum does not match its contents."""
