"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

from pathlib import Path

from .documents import cube_dims
from .errors import DimensionMismatch, GeometryError
from .flow import FlowField, FrameSequence, center_crop, crop_size, frame_flows, load_flows, load_frames
from .library import BoundingBox, Track


def check_flows(flows, width: int | None = None, height: int | None = None) -> list[FlowField]:
    flows = list(flows)
    if not flows:
        raise DimensionMismatch("no flow fields")
    shape = flows[0].u.shape
    if width is not None and shape != (height, width):
        raise DimensionMismatch(f"flow is {shape[1]}x{shape[0]}, frames are {width}x{height}")
    for i, f in enumerate(flows):
        if f.u.shape != shape:
            raise DimensionMismatch(f"flow {i} is {f.u.shape}, expected {shape}")
    return flows


def query_cube(width: int, height: int, grid: tuple[int, int], cube_base: int) -> tuple[int, int]:
    """Cube size giving a query the library's ``(cols, rows)`` word grid."""
    cols, rows = grid
    if width % cols or height % rows:
        raise GeometryError(f"query {width}x{height} cannot be split into the library grid {cols}x{rows}")
    cube = (width // cols, height // rows)
    for level in (1, 2, 4):
        cube_dims(cube, level)
    return cube


def crop_video(frames: FrameSequence | None, flows, tracks, multiple: int):
    """Center-crop frames, flows and track boxes to dimensions divisible by ``multiple``."""
    h, w = flows[0].u.shape
    crop = crop_size(w, h, multiple)
    if crop == (0, 0, w, h):
        return frames, flows, tracks
    x0, y0, cw, ch = crop
    if frames is not None:
        frames = FrameSequence(frames.video_id, [center_crop(f, crop) for f in frames.frames], frames.fps)
    flows = [FlowField(center_crop(f.u, crop), center_crop(f.v, crop)) for f in flows]
    out = []
    for tr in tracks:
        boxes = {}
        for fr, b in tr.boxes.items():
            nb = BoundingBox(max(b[0] - x0, 0), max(b[1] - y0, 0), min(b[2] - x0, cw), min(b[3] - y0, ch))
            if nb.is_valid():
                boxes[fr] = nb
        if boxes:
            out.append(Track(tr.track_id, boxes, tr.video_id, tr.flip))
    return frames, flows, out


def load_video(path, flows_dir=None, smoothness: float = 0.1, iterations: int = 200):
    """Frames of a video directory plus per-frame flows.

    Flows come from ``flows_dir``, else ``<path>/flows`` when it holds
    ``.flo`` files, else are computed with Horn-Schunck.
    """
    path = Path(path)
    frames = load_frames(path)
    flow_path = Path(flows_dir) if flows_dir else path / "flows"
    if flow_path.is_dir() and any(flow_path.glob("*.flo")):
        flows = load_flows(flow_path, len(frames))
    else:
        flows = frame_flows(frames, smoothness, iterations)
    check_flows(flows, frames.width, frames.height)
    return frames, flows
