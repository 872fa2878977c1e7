"""Exception types raised across the package."""


class SearchTrackError(Exception):
    """Base class for all package errors."""


class FormatError(SearchTrackError):
    """A file or persisted artifact could not be parsed."""


class DimensionMismatch(SearchTrackError):
    """Images or fields that must share a size do not."""


class EmptyInput(SearchTrackError):
    pass


class GeometryError(SearchTrackError):
    """Region dimensions are not divisible by the cube dimensions."""


class EmptyQuery(SearchTrackError):
    pass


class EmptyOverlap(SearchTrackError):
    """Ground-truth and hypothesis tracks share no frames."""


class LibraryReferenceError(SearchTrackError):
    """An annotation references a video that is not in the library."""


class UndefinedMetric(SearchTrackError):
    """A metric has no defined value for the given input (e.g. MOTA with no GT)."""
