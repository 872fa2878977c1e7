"""Frame loading, dense optical flow and per-time-step flow aggregation.

Flow fields use image coordinates: ``u`` points right and ``v`` points down,
in pixels per frame interval. Arrays are indexed ``[row, col]``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DimensionMismatch, EmptyInput, FormatError

FLO_MAGIC = b"PIEH"
IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")


@dataclass
class FrameSequence:
    video_id: str
    frames: list  # HxWx3 uint8 arrays
    fps: float = 24.0

    def __post_init__(self):
        if len(self.frames) < 2:
            raise EmptyInput(f"{self.video_id}: need at least 2 frames, got {len(self.frames)}")
        shape = self.frames[0].shape
        for i, fr in enumerate(self.frames):
            if fr.shape != shape:
                raise DimensionMismatch(f"{self.video_id}: frame {i} is {fr.shape[:2]}, expected {shape[:2]}")

    @property
    def height(self) -> int:
        return self.frames[0].shape[0]

    @property
    def width(self) -> int:
        return self.frames[0].shape[1]

    def __len__(self):
        return len(self.frames)


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u)
        self.v = np.asarray(self.v)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise DimensionMismatch(f"u {self.u.shape} and v {self.v.shape} must be equal 2-D arrays")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


@dataclass
class MagnitudeField:
    mag: np.ndarray = field(repr=False)

    @property
    def height(self) -> int:
        return self.mag.shape[0]

    @property
    def width(self) -> int:
        return self.mag.shape[1]


def read_image(path) -> np.ndarray:
    """Read a binary PGM/PPM file as an HxWx3 uint8 array."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "1", "I", "I;16", "I;16B"):
                arr = np.asarray(im.convert("L"))
                return np.repeat(arr[:, :, None], 3, axis=2)
            return np.asarray(im.convert("RGB")).copy()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc


def write_image(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim == 2:
        Image.fromarray(image, mode="L").save(path, format="PPM")
    else:
        Image.fromarray(image, mode="RGB").save(path, format="PPM")


def load_frames(path, video_id: str | None = None, fps: float = 24.0) -> FrameSequence:
    """Load every PGM/PPM file of a directory, in lexicographic name order."""
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    frames = [read_image(p) for p in files]
    if len(frames) < 2:
        raise EmptyInput(f"{path}: need at least 2 frames, found {len(frames)}")
    return FrameSequence(video_id or path.name, frames, fps)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Luma 0.299R + 0.587G + 0.114B as float64 in [0, 255]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114


_HS_AVG = np.array([[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]])
_HS_KX = np.array([[-1.0, 1.0], [-1.0, 1.0]]) * 0.25
_HS_KY = np.array([[-1.0, -1.0], [1.0, 1.0]]) * 0.25
_HS_KT = np.ones((2, 2)) * 0.25


def compute_flow(prev: np.ndarray, next: np.ndarray, smoothness: float = 0.1,
                 iterations: int = 200) -> FlowField:
    """Horn-Schunck flow from ``prev`` to ``next``.

    Images are grayscale (or RGB, converted with luma weights) and are scaled to
    [0, 1] before differentiation, so ``smoothness`` is relative to unit
    intensity range.
    """
    if smoothness <= 0:
        raise ValueError("smoothness must be > 0")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    im1 = to_gray(prev) / 255.0
    im2 = to_gray(next) / 255.0
    if im1.shape != im2.shape:
        raise DimensionMismatch(f"frames differ in size: {im1.shape} vs {im2.shape}")

    conv = lambda a, k: ndimage.correlate(a, k, mode="nearest")
    ix = conv(im1, _HS_KX) + conv(im2, _HS_KX)
    iy = conv(im1, _HS_KY) + conv(im2, _HS_KY)
    it = conv(im2, _HS_KT) - conv(im1, _HS_KT)
    denom = smoothness + ix ** 2 + iy ** 2

    u = np.zeros_like(im1)
    v = np.zeros_like(im1)
    for _ in range(iterations):
        u_avg = conv(u, _HS_AVG)
        v_avg = conv(v, _HS_AVG)
        der = (ix * u_avg + iy * v_avg + it) / denom
        u = u_avg - ix * der
        v = v_avg - iy * der
    return FlowField(u, v)


def frame_flows(frames: FrameSequence, smoothness: float = 0.1, iterations: int = 200) -> list[FlowField]:
    """One flow field per frame: flow from frame i to i+1, last field repeated.

    Repeating the final field keeps ``len(result) == len(frames)`` so time
    step ``t`` covers exactly frames ``[t*step, (t+1)*step)``.
    """
    flows = [compute_flow(a, b, smoothness, iterations) for a, b in zip(frames.frames[:-1], frames.frames[1:])]
    return pad_flows(flows, len(frames))


def pad_flows(flows: Sequence[FlowField], n_frames: int) -> list[FlowField]:
    flows = list(flows)
    if not flows:
        raise EmptyInput("no flow fields")
    while len(flows) < n_frames:
        flows.append(flows[-1])
    return flows[:n_frames]


def read_flo(path) -> FlowField:
    """Read a Middlebury ``.flo`` file."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != FLO_MAGIC:
        raise FormatError(f"{path}: bad .flo magic {data[:4]!r}")
    width, height = struct.unpack("<ii", data[4:12])
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: bad .flo dimensions {width}x{height}")
    expected = width * height * 2 * 4
    payload = data[12:]
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated payload, {len(payload)} of {expected} bytes")
    arr = np.frombuffer(payload, dtype="<f4", count=width * height * 2).reshape(height, width, 2)
    return FlowField(arr[..., 0].astype(np.float32), arr[..., 1].astype(np.float32))


def write_flo(field: FlowField, path) -> None:
    h, w = field.u.shape
    arr = np.empty((h, w, 2), dtype="<f4")
    arr[..., 0] = field.u
    arr[..., 1] = field.v
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(struct.pack("<ii", w, h))
        fh.write(arr.tobytes())


def load_flows(path, n_frames: int | None = None) -> list[FlowField]:
    """Load all ``.flo`` files in a directory (name order), padded to ``n_frames``."""
    files = sorted(Path(path).glob("*.flo"))
    if not files:
        raise EmptyInput(f"{path}: no .flo files")
    flows = [read_flo(p) for p in files]
    shape = flows[0].u.shape
    for p, f in zip(files, flows):
        if f.u.shape != shape:
            raise DimensionMismatch(f"{p}: {f.u.shape} differs from {shape}")
    if n_frames is not None:
        flows = pad_flows(flows, n_frames)
    return flows


def timestep_average(flows: Sequence[FlowField], step: int = 4) -> list[FlowField]:
    """Per-pixel mean over consecutive groups of ``step`` fields.

    A trailing group shorter than ``step`` is dropped.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    if len(flows) == 0:
        raise EmptyInput("no flow fields to average")
    out = []
    for t in range(len(flows) // step):
        group = flows[t * step:(t + 1) * step]
        u = np.mean([f.u for f in group], axis=0)
        v = np.mean([f.v for f in group], axis=0)
        out.append(FlowField(u, v))
    return out


def magnitude(field: FlowField) -> MagnitudeField:
    return MagnitudeField(np.hypot(field.u, field.v))


def crop_size(width: int, height: int, multiple: int) -> tuple[int, int, int, int]:
    """Centered crop ``(x0, y0, w, h)`` to the largest size divisible by ``multiple``."""
    w = width - width % multiple
    h = height - height % multiple
    if w == 0 or h == 0:
        raise DimensionMismatch(f"{width}x{height} is smaller than {multiple}")
    return (width - w) // 2, (height - h) // 2, w, h


def center_crop(arr: np.ndarray, crop: tuple[int, int, int, int]) -> np.ndarray:
    x0, y0, w, h = crop
    return arr[y0:y0 + h, x0:x0 + w]
