"""Exception types shared across the client, server, and codec layers."""


class CloudshardError(Exception):
    """Base class for all package-specific failures."""


class InsufficientShares(CloudshardError):
    """Fewer than k distinct shares were supplied to a decode operation."""


class IntegrityError(CloudshardError):
    """A decoded secret failed its embedded-hash verification."""


class DecodeFailure(CloudshardError):
    """Every k-subset of the available shares failed verification."""


class InsufficientClouds(CloudshardError):
    """Fewer than k clouds are reachable for a restore."""


class NotFound(CloudshardError):
    """A requested key, file, or container does not exist."""


class CorruptRecord(CloudshardError):
    """A container record could not be read back intact."""


class ProtocolError(CloudshardError):
    """A malformed or out-of-contract wire message."""


class FlushError(CloudshardError):
    """One or more container buffers could not be persisted.

    Carries the ids of containers still held in memory so the caller can
    retry the flush.
    """

    def __init__(self, message: str, unpersisted: list[str]):
        super().__init__(message)
        self.unpersisted = unpersisted
