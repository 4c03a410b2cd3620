"""Exception taxonomy shared across the toolkit.

The CLI maps these onto process exit codes: input problems (bad files,
bad references, unusable datasets) exit 2, provider/transport problems
exit 3, anything else exits 4.
"""

from __future__ import annotations


class RelscoreError(Exception):
    """Base class for all toolkit errors."""


class InputError(RelscoreError):
    """A user-supplied file, flag, or dataset is unusable."""


class DatasetParseError(InputError):
    """A dataset file could not be parsed under the named format."""


class DatasetValidationError(InputError):
    """Parsed data violates a model invariant.

    Carries the image id and offending field when known so the message
    pinpoints the bad record.
    """

    def __init__(self, message: str, *, image_id: str | None = None, field: str | None = None):
        parts = []
        if image_id is not None:
            parts.append(f"image {image_id!r}")
        if field is not None:
            parts.append(f"field {field!r}")
        if parts:
            message = f"{message} ({', '.join(parts)})"
        super().__init__(message)
        self.image_id = image_id
        self.field = field


class ImageIdMismatchError(InputError):
    """Prediction and groundtruth datasets cover different image ids."""


class EmptySubsetError(InputError):
    """No pair in the dataset satisfies the subset predicate."""


class AllImagesSkippedError(InputError):
    """Every image was degenerate (no scored relations or fewer than 2 objects)."""


class GroundtruthMissingError(RelscoreError):
    """The groundtruth predicate is absent from the candidate list."""


class ProviderError(RelscoreError):
    """A scoring/generation backend failed after exhausting retries."""


class UnsupportedBackendError(ProviderError):
    """The requested operation is not available on this backend."""
