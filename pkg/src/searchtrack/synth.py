"""Synthetic videos of rigidly translating textured rectangles.

Flow is written analytically: inside a rectangle at frame ``i`` the flow to
frame ``i + 1`` is exactly its velocity, and zero on the static background.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .flow import FlowField, FrameSequence, write_flo, write_image
from .library import BoundingBox, Track, write_tracks

SCENARIOS = ("moving_square", "two_movers", "occlusion")


@dataclass(frozen=True)
class MovingObject:
    track_id: str
    x: int
    y: int
    width: int
    height: int
    vx: int
    vy: int

    def box(self, frame: int) -> BoundingBox:
        x = self.x + self.vx * frame
        y = self.y + self.vy * frame
        return BoundingBox(float(x), float(y), float(x + self.width), float(y + self.height))


@dataclass(frozen=True)
class Scene:
    objects: tuple
    width: int = 320
    height: int = 240
    n_frames: int = 100

    def transformed(self, scale: float = 1.0, offset=(0, 0)) -> "Scene":
        """Scale every object's geometry and velocity, then shift it by ``offset``."""
        def s(v):
            out = v * scale
            if abs(out - round(out)) > 1e-9:
                raise ValueError(f"scale {scale} makes {v} fractional")
            return int(round(out))
        objs = tuple(replace(o, x=s(o.x) + offset[0], y=s(o.y) + offset[1], width=s(o.width),
                             height=s(o.height), vx=s(o.vx), vy=s(o.vy)) for o in self.objects)
        return replace(self, objects=objs)


@dataclass
class SyntheticVideo:
    frames: FrameSequence
    flows: list  # n_frames - 1 analytic FlowFields
    tracks: list

    @property
    def video_id(self) -> str:
        return self.frames.video_id


def scenario(name: str, n_frames: int = 100, width: int = 320, height: int = 240,
             size: int = 40, speed: int = 2) -> Scene:
    if name == "moving_square":
        objs = (MovingObject("0", 40, 100, size, size, speed, 0),)
    elif name == "two_movers":
        objs = (MovingObject("0", 30, 40, size, size, speed, 0),
                MovingObject("1", width - 30 - size, height - 40 - size, size, size, -speed, 0))
    elif name == "occlusion":
        objs = (MovingObject("0", 20, 100, size, size, speed, 0),
                MovingObject("1", width - 20 - size, 110, size, size, -speed, 0))
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return Scene(objs, width, height, n_frames)


def _texture(rng, height: int, width: int, hue: float, sat: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    val = np.full((height, width), 0.55)
    for _ in range(3):
        fx, fy = rng.uniform(0.05, 0.3, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        val += 0.12 * np.sin(fx * xx + fy * yy + phase)
    val = np.clip(val, 0.05, 1.0)
    r, g, b = colorsys.hsv_to_rgb(hue, sat, 1.0)
    return (val[..., None] * np.array([r, g, b]) * 255).round().astype(np.uint8)


def render(scene: Scene, seed: int = 0, video_id: str = "synthetic") -> SyntheticVideo:
    """Frames, analytic flows and ground-truth tracks for a scene.

    Later objects are drawn on top of earlier ones.
    """
    rng = np.random.default_rng(seed)
    background = _texture(rng, scene.height, scene.width, rng.uniform(0, 1), 0.15)
    textures = [_texture(rng, o.height, o.width, (0.1 + 0.37 * i + rng.uniform(0, 0.05)) % 1.0, 0.85)
                for i, o in enumerate(scene.objects)]
    frames, flows = [], []
    tracks = [Track(o.track_id, {}, video_id) for o in scene.objects]
    for i in range(scene.n_frames):
        img = background.copy()
        u = np.zeros((scene.height, scene.width), np.float32)
        v = np.zeros_like(u)
        for obj, tex, track in zip(scene.objects, textures, tracks):
            box = obj.box(i)
            x0, y0 = int(box.left), int(box.top)
            xs0, ys0 = max(x0, 0), max(y0, 0)
            xs1, ys1 = min(x0 + obj.width, scene.width), min(y0 + obj.height, scene.height)
            if xs1 <= xs0 or ys1 <= ys0:
                continue
            img[ys0:ys1, xs0:xs1] = tex[ys0 - y0:ys1 - y0, xs0 - x0:xs1 - x0]
            u[ys0:ys1, xs0:xs1] = obj.vx
            v[ys0:ys1, xs0:xs1] = obj.vy
            track.boxes[i] = BoundingBox(float(xs0), float(ys0), float(xs1), float(ys1))
        frames.append(img)
        if i < scene.n_frames - 1:
            flows.append(FlowField(u, v))
    return SyntheticVideo(FrameSequence(video_id, frames), flows, [t for t in tracks if t.boxes])


def write_synthetic(video: SyntheticVideo, out_dir) -> Path:
    """Write ``<out_dir>/<video_id>/`` with PPM frames, ``flows/*.flo`` and ``gt.csv``."""
    root = Path(out_dir) / video.video_id
    (root / "flows").mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(video.frames.frames):
        write_image(root / f"frame_{i:05d}.ppm", frame)
    for i, flow in enumerate(video.flows):
        write_flo(flow, root / "flows" / f"flow_{i:05d}.flo")
    write_tracks(root / "gt.csv", {video.video_id: video.tracks})
    return root
