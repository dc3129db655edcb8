"""Exception types shared across the toolkit."""


class FacekitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(FacekitError, ValueError):
    """An argument value is outside its allowed domain."""


class ShapeError(DomainError):
    """Tensor shapes or extents do not agree."""


class DataError(FacekitError):
    """A dataset, image, mask, or manifest is malformed or inconsistent."""


class FormatError(FacekitError):
    """A binary or structured-text file does not match its format contract."""


class ChecksumError(FormatError):
    """Stored checksum does not match the payload."""


class VersionError(FormatError):
    """File carries an unsupported format version."""


class TruncatedError(FormatError):
    """File ended before the format says it should."""


class CompatibilityError(FormatError):
    """A checkpoint does not fit the network spec it is loaded against."""


class TrainingDiverged(FacekitError):
    """Training produced a non-finite loss."""
