"""Exception hierarchy shared across the package."""


class FuseIdError(Exception):
    """Base class for every error raised by fuseid."""


class DimensionMismatchError(FuseIdError, ValueError):
    """Operands have incompatible shapes or lengths."""


class ConvergenceError(FuseIdError, RuntimeError):
    """Iterative solver failed to converge within its sweep cap."""


class ImageLoadError(FuseIdError, ValueError):
    """Malformed or unsupported image file.

    ``offset`` is the byte position in the file where parsing failed,
    when known.
    """

    def __init__(self, message: str, *, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class ModalityMismatchError(FuseIdError, ValueError):
    """Operands belong to different biometric modalities."""


class NormalizerError(FuseIdError, ValueError):
    """Distance normalizer unfitted or fitted on degenerate data."""


class UnknownSubjectError(FuseIdError, LookupError):
    """Claimed subject is not enrolled in the gallery."""


class DatasetError(FuseIdError, ValueError):
    """Bad dataset: missing files, malformed manifest, unusable split."""


class StoreError(FuseIdError):
    """Base class for persistence failures."""


class MagicMismatchError(StoreError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(StoreError):
    """File uses a format version this build does not support."""


class TruncatedFileError(StoreError):
    """File ends before the declared payload is complete."""


class ChecksumError(StoreError):
    """CRC-32 trailer does not match the file contents."""


class FormatError(StoreError):
    """Structurally invalid payload (bad enum byte, trailing bytes, ...)."""


class ArtifactKindError(StoreError):
    """File holds a different artifact kind than requested."""
