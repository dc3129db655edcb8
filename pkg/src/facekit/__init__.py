"""facekit: face parsing and attribute classification toolkit.

Two-stage pipeline: a small convolutional network labels every face pixel
into 7 semantic classes (back, skin, hair, eyes, brows, nose, mouth) and
emits per-class probability maps; a second classifier is trained on a
stack of 5 selected probability maps. Includes a random-forest feature
importance analysis, a k-fold evaluation harness, and a local annotation
service for producing pixel labels.
"""

__version__ = "0.1.0"

from facekit.errors import (
    ChecksumError,
    CompatibilityError,
    DataError,
    DomainError,
    FacekitError,
    FormatError,
    ShapeError,
    TrainingDiverged,
    TruncatedError,
    VersionError,
)

__all__ = [
    "__version__",
    "FacekitError",
    "DomainError",
    "ShapeError",
    "DataError",
    "FormatError",
    "ChecksumError",
    "VersionError",
    "TruncatedError",
    "CompatibilityError",
    "TrainingDiverged",
]
