"""Exception types raised by the engine.

Every engine failure derives from KldaError so callers can catch the whole
family; the leaf types distinguish failure kinds that contracts require to
be told apart (file corruption vs. dimension mismatch vs. protocol misuse).
"""


class KldaError(Exception):
    """Base class for all engine errors."""


class ConfigError(KldaError):
    """Invalid configuration value (zero dimension, non-positive bandwidth, ...)."""


class DimensionError(KldaError):
    """Array width/length does not match what the operation requires."""


class DataError(KldaError):
    """Input data violates batch invariants (non-finite values, negative labels, empty batch)."""


class ProtocolError(KldaError):
    """Operation called out of order or on the wrong state (duplicate class, empty accumulator, too few classes)."""


class SingularityError(KldaError):
    """Covariance factorization failed; a larger ridge is needed."""


class UndefinedSimilarityError(KldaError):
    """Cosine similarity undefined for a zero-norm vector."""


class ModelCorruptionError(KldaError):
    """Members of a loaded/assembled model disagree on shapes or class ids."""


class AggregationError(KldaError):
    """Reports being aggregated are not homogeneous."""


class FormatError(KldaError):
    """Base class for binary file/stream format failures."""


class MagicMismatch(FormatError):
    """Leading magic bytes identify a different (or no) format."""


class VersionMismatch(FormatError):
    """Format version not supported by this reader."""


class TruncatedFile(FormatError):
    """Stream ends before the declared payload/footer."""


class CrcMismatch(FormatError):
    """Checksum over the stream does not match the stored value."""


class NonFiniteData(FormatError):
    """Payload decodes to NaN/Inf values."""
