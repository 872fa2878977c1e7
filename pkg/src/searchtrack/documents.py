"""Binary motion documents built from quantized per-cube flow directions.

Word layout is fixed: ``w = (row * cols + col) * 4 + d`` with direction
index ``d`` in the order up, left, down, right.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import GeometryError
from .flow import FlowField, FrameSequence

DIRECTIONS = ("up", "left", "down", "right")
N_BITS = len(DIRECTIONS)
# unit vectors in image coordinates (+v is down)
_AXES = np.array([[0.0, -1.0], [-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])

LEVELS = (1, 2, 4)
FLIPS = ("none", "h", "v")


class MotionCode(NamedTuple):
    up: bool
    left: bool
    down: bool
    right: bool


@dataclass(frozen=True)
class ScaleConfig:
    config_id: int
    level: int
    x: int
    y: int
    width: int
    height: int

    @property
    def region(self) -> tuple[int, int, int, int]:
        return self.x, self.y, self.width, self.height


@dataclass(frozen=True)
class CubeGrid:
    cube_w: int
    cube_h: int
    cols: int
    rows: int
    step: int = 4

    @property
    def n_words(self) -> int:
        return self.cols * self.rows * N_BITS


class FragmentId(NamedTuple):
    video_id: str
    config_id: int
    flip: int
    start_t: int

    def __str__(self):
        return f"{self.video_id}/c{self.config_id}/{FLIPS[self.flip]}/{self.start_t}"


@dataclass(frozen=True)
class Fragment:
    fragment_id: FragmentId
    activations: frozenset

    def __len__(self):
        return len(self.activations)


@dataclass
class MotionDocument:
    matrix: np.ndarray  # bool, shape (W, T)
    config_id: int = 0
    grid: CubeGrid | None = None

    @property
    def W(self) -> int:
        return self.matrix.shape[0]

    @property
    def T(self) -> int:
        return self.matrix.shape[1]

    @property
    def activations(self) -> frozenset:
        ws, ts = np.nonzero(self.matrix)
        return frozenset(zip(ws.tolist(), ts.tolist()))


def n_words(width: int, height: int, cube_w: int, cube_h: int, m: int = N_BITS) -> int:
    """Word count per time step: ``width * height * m / (cube_w * cube_h)``."""
    return width * height * m // (cube_w * cube_h)


def direction_votes(u, v, mag_threshold: float = 1.0):
    """Soft direction votes per vector, shape ``(..., 4)``.

    Vectors at or below ``mag_threshold`` vote zero; others vote the clamped
    cosine similarity to each axis direction.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    mag = np.hypot(u, v)
    moving = mag > mag_threshold
    safe = np.where(moving, mag, 1.0)
    cos = (u[..., None] * _AXES[:, 0] + v[..., None] * _AXES[:, 1]) / safe[..., None]
    return np.where(moving[..., None], np.clip(cos, 0.0, None), 0.0)


def encode_cube(vectors, mag_threshold: float = 1.0, vote_threshold: float = 0.10) -> MotionCode:
    """4-bit motion code for the flow vectors of one cube over one time step."""
    vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, 2)
    if len(vectors) == 0:
        raise ValueError("encode_cube needs at least one vector")
    if mag_threshold <= 0 or vote_threshold <= 0:
        raise ValueError("thresholds must be > 0")
    votes = direction_votes(vectors[:, 0], vectors[:, 1], mag_threshold)
    frac = np.sort(votes, axis=0).sum(axis=0) / len(vectors)
    return MotionCode(*(bool(f >= vote_threshold) for f in frac))


def cube_dims(cube_base, level: int) -> tuple[int, int]:
    cw, ch = (cube_base, cube_base) if np.isscalar(cube_base) else cube_base
    if cw % level or ch % level:
        raise GeometryError(f"cube {cw}x{ch} is not divisible by level {level}")
    return cw // level, ch // level


def cube_grid(config: ScaleConfig, cube_base, step: int = 4) -> CubeGrid:
    cw, ch = cube_dims(cube_base, config.level)
    if config.width % cw or config.height % ch:
        raise GeometryError(
            f"region {config.width}x{config.height} not divisible by cube {cw}x{ch}")
    return CubeGrid(cw, ch, config.width // cw, config.height // ch, step)


def build_document(flows: Sequence[FlowField], config: ScaleConfig, cube_base=20,
                   mag_threshold: float = 1.0, vote_threshold: float = 0.10,
                   step: int = 4) -> MotionDocument:
    """Encode per-time-step flow fields into a binary ``W x T`` document.

    ``flows`` are full-frame, already time-step averaged. Only the config's
    region is used; cube size is ``cube_base / level`` so W is the same for
    every configuration of a frame.
    """
    grid = cube_grid(config, cube_base, step)
    T = len(flows)
    if T == 0:
        return MotionDocument(np.zeros((grid.n_words, 0), dtype=bool), config.config_id, grid)
    ys = slice(config.y, config.y + config.height)
    xs = slice(config.x, config.x + config.width)
    u = np.stack([f.u[ys, xs] for f in flows])
    v = np.stack([f.v[ys, xs] for f in flows])
    if u.shape[1:] != (config.height, config.width):
        raise GeometryError(f"region {config.region} exceeds the flow field {flows[0].u.shape}")
    votes = direction_votes(u, v, mag_threshold)
    votes = votes.reshape(T, grid.rows, grid.cube_h, grid.cols, grid.cube_w, N_BITS)
    frac = votes.sum(axis=(2, 4)) / (grid.cube_w * grid.cube_h)
    bits = frac >= vote_threshold  # (T, rows, cols, 4)
    matrix = bits.reshape(T, grid.n_words).T.copy()
    return MotionDocument(matrix, config.config_id, grid)


def multiscale_configs(width: int, height: int) -> list[ScaleConfig]:
    """Full frame, 4 quadrants and 16 equal parts: 21 configs, row-major per level."""
    configs = []
    for level in LEVELS:
        if width % level or height % level:
            raise GeometryError(f"{width}x{height} cannot be split {level}x{level}")
        rw, rh = width // level, height // level
        for r in range(level):
            for c in range(level):
                configs.append(ScaleConfig(len(configs), level, c * rw, r * rh, rw, rh))
    return configs


def fragmentize(doc: MotionDocument, fragment_len: int = 8, video_id: str = "",
                flip: int = 0) -> list[Fragment]:
    """Every window of ``fragment_len`` time steps, stride 1, re-based to tau."""
    if fragment_len < 1:
        raise ValueError("fragment_len must be >= 1")
    frags = []
    by_t: dict[int, list[int]] = {}
    ws, ts = np.nonzero(doc.matrix)
    for w, t in zip(ws.tolist(), ts.tolist()):
        by_t.setdefault(t, []).append(w)
    for start in range(doc.T - fragment_len + 1):
        acts = frozenset((w, t - start) for t in range(start, start + fragment_len)
                         for w in by_t.get(t, ()))
        frags.append(Fragment(FragmentId(video_id, doc.config_id, flip, start), acts))
    return frags


def _flip_array(a: np.ndarray, axis: str) -> np.ndarray:
    if axis in ("h", "horizontal"):
        return a[:, ::-1]
    if axis in ("v", "vertical"):
        return a[::-1, :]
    raise ValueError(f"unknown flip axis {axis!r}")


def flip_flow(field: FlowField, axis: str) -> FlowField:
    u, v = _flip_array(field.u, axis), _flip_array(field.v, axis)
    if axis in ("h", "horizontal"):
        u = -u
    else:
        v = -v
    return FlowField(u, v)


def flip_video(obj, axis: str):
    """Mirror frames, flow fields, or sequences of either."""
    if isinstance(obj, FlowField):
        return flip_flow(obj, axis)
    if isinstance(obj, FrameSequence):
        return FrameSequence(obj.video_id, [_flip_array(f, axis) for f in obj.frames], obj.fps)
    if isinstance(obj, np.ndarray):
        return _flip_array(obj, axis)
    return [flip_video(o, axis) for o in obj]


def flip_box(box, width: int, height: int, axis: str):
    """Mirror an inclusive-exclusive ``(left, top, right, bottom)`` box."""
    left, top, right, bottom = box
    if axis in ("h", "horizontal"):
        return type(box)(width - right, top, width - left, bottom)
    if axis in ("v", "vertical"):
        return type(box)(left, height - bottom, right, height - top)
    raise ValueError(f"unknown flip axis {axis!r}")


def flip_word(w: int, grid: CubeGrid, axis: str) -> int:
    """Word index of ``w`` after mirroring the frame along ``axis``."""
    cell, d = divmod(w, N_BITS)
    row, col = divmod(cell, grid.cols)
    if axis in ("h", "horizontal"):
        col = grid.cols - 1 - col
        d = {1: 3, 3: 1}.get(d, d)
    else:
        row = grid.rows - 1 - row
        d = {0: 2, 2: 0}.get(d, d)
    return (row * grid.cols + col) * N_BITS + d
