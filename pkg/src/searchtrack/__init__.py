"""Search-and-retrieval multi-object tracking from motion documents."""
from .config import RunConfig
from .estimator import SearchTracker
from .library import BoundingBox, LibraryIndex, LibraryVideo, Track, build_library, load_index, save_index

__all__ = ["BoundingBox", "LibraryIndex", "LibraryVideo", "RunConfig", "SearchTracker", "Track",
           "build_library", "load_index", "save_index"]
__version__ = "0.1.0"
