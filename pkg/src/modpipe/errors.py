"""Exception types shared across the engine."""


class ModpipeError(Exception):
    """Base class for all engine errors."""


class MalformedPayload(ModpipeError):
    """Payload bytes do not decode under the item's declared modality."""


class DuplicateMarker(ModpipeError):
    """A metadata marker with the same issuer_id is already embedded."""


class MalformedMarkerBlock(ModpipeError):
    """Marker magic matched but the block failed to parse (tamper evidence)."""


class NoMarkerFound(ModpipeError):
    """No marker block is present on the item."""


class UnsupportedModality(ModpipeError):
    """Operation does not apply to the item's modality."""


class ImageTooSmall(ModpipeError):
    """Raster has too few pixels for the requested watermark."""


class BadDimensions(ModpipeError):
    """Raster dimensions unusable for the block transform."""


class InvalidAttackParams(ModpipeError):
    """Attack parameters invalid for the attack kind or modality."""


class KeyChainMismatch(ModpipeError):
    """Signing key's public half is not the leaf of the supplied chain."""


class MissingGroundTruth(ModpipeError):
    """Ground-truth label required but absent."""


class UnresolvedIndeterminate(ModpipeError):
    """A score component is indeterminate and policy says escalate."""


class MissingScore(ModpipeError):
    """Label assignment needs a score vector but none was supplied."""


class ConfigInvalid(ModpipeError):
    """Policy configuration failed validation."""


class StorageFailure(ModpipeError):
    """Decision could not be persisted; caller must retry."""


class UnknownContent(ModpipeError):
    """No decision exists for the requested content id."""


class InsufficientPopulation(ModpipeError):
    """Requested sample size exceeds the available population."""


class CorruptLog(ModpipeError):
    """Decision log has a damaged record before the tail."""
