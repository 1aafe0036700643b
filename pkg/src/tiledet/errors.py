"""Exception types shared across the toolkit."""

from __future__ import annotations


class TiledetError(Exception):
    """Base class for all toolkit errors."""


class DegenerateBoxError(TiledetError, ValueError):
    """A ratio over box areas was requested for a zero-area box."""


class OutOfBoundsFrameError(TiledetError, ValueError):
    """A crop was requested for a frame not fully inside the image."""


class UnsupportedFormatError(TiledetError, ValueError):
    """The raster file is not in a supported format."""


class ImageTooSmallError(TiledetError, ValueError):
    """The image cannot hold even one grid cell of the minimum side."""


class InsufficientAnnotatedAreaError(TiledetError, RuntimeError):
    """Frame sampling exhausted its retry budget without finding annotations."""


class UnknownFrameIndexError(TiledetError, KeyError):
    """A detection refers to a frame index absent from the plan."""


class ManifestMismatchError(TiledetError, ValueError):
    """An artifact was produced against a different frame manifest."""


class SchemaViolationError(TiledetError, ValueError):
    """A JSONL artifact line does not match its schema.

    Carries the offending path and 1-based line number so CLI diagnostics
    can point at the exact record.
    """

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class InputTooLargeError(TiledetError, ValueError):
    """The brute-force oracle refuses inputs past its size cap."""


class ClassAbsentError(TiledetError, KeyError):
    """Average precision was requested for a class with no ground truth."""


class BackendError(TiledetError, RuntimeError):
    """A detector backend failed on a specific frame."""

    def __init__(self, frame_index: int, cause: BaseException):
        super().__init__(f"backend failed on frame {frame_index}: {cause}")
        self.frame_index = frame_index
        self.__cause__ = cause
