"""Annotated video library: the five index tables, persistence and sampling."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .documents import FLIPS, FragmentId, ScaleConfig, build_document, flip_box, flip_flow, fragmentize
from .errors import FormatError, LibraryReferenceError
from .flow import FlowField, timestep_average

INDEX_FORMAT = "searchtrack-index"
INDEX_VERSION = 1
TABLE_FILES = ("fragment_forward.bin", "fragment_inverse.bin", "flow_fields.bin",
               "track_forward.bin", "track_inverse.bin")
CSV_HEADER = ("video_id", "track_id", "frame", "left", "top", "right", "bottom")


class BoundingBox(NamedTuple):
    left: float
    top: float
    right: float
    bottom: float

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def center(self) -> tuple[float, float]:
        return (self.left + self.right) / 2, (self.top + self.bottom) / 2

    @property
    def area(self) -> float:
        return self.width * self.height

    def is_valid(self, width: float | None = None, height: float | None = None) -> bool:
        if not (self.left < self.right and self.top < self.bottom):
            return False
        if width is not None and (self.left < 0 or self.right > width):
            return False
        if height is not None and (self.top < 0 or self.bottom > height):
            return False
        return True


@dataclass
class Track:
    track_id: str
    boxes: dict = field(default_factory=dict)  # frame -> BoundingBox
    video_id: str = ""
    flip: int = 0

    @property
    def frames(self) -> list[int]:
        return sorted(self.boxes)

    @property
    def span(self) -> tuple[int, int]:
        """Inclusive-exclusive frame range."""
        fr = self.frames
        return fr[0], fr[-1] + 1

    def is_contiguous(self) -> bool:
        fr = self.frames
        return not fr or fr[-1] - fr[0] + 1 == len(fr)


@dataclass
class LibraryVideo:
    """One annotated library video: per-frame flows plus its tracks."""
    video_id: str
    flows: list  # one FlowField per frame
    tracks: list = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.flows[0].width

    @property
    def height(self) -> int:
        return self.flows[0].height


class VideoInfo(NamedTuple):
    width: int
    height: int
    n_frames: int
    n_steps: int


@dataclass(frozen=True)
class LibraryParams:
    cube_base: int = 20
    step: int = 4
    fragment_len: int = 8
    mag_threshold: float = 1.0
    vote_threshold: float = 0.10


# -- annotation CSV ---------------------------------------------------------

def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def read_annotations(path) -> dict[str, list[Track]]:
    """Parse an annotation/track CSV into ``{video_id: [Track, ...]}``."""
    tracks: dict[tuple[str, str], Track] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
                raise FormatError(f"{path}: expected header {','.join(CSV_HEADER)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(CSV_HEADER):
                    raise FormatError(f"{path}:{lineno}: expected 7 fields, got {len(row)}")
                vid, tid = row[0], row[1]
                frame = int(row[2])
                box = BoundingBox(*(float(x) for x in row[3:]))
                if not box.is_valid() or frame < 0:
                    raise FormatError(f"{path}:{lineno}: invalid box {box} at frame {frame}")
                tr = tracks.setdefault((vid, tid), Track(tid, {}, vid))
                if frame in tr.boxes:
                    raise FormatError(f"{path}:{lineno}: duplicate frame {frame} for track {tid}")
                tr.boxes[frame] = box
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    out: dict[str, list[Track]] = defaultdict(list)
    for (vid, _), tr in sorted(tracks.items()):
        out[vid].append(tr)
    return dict(out)


def write_tracks(path, tracks_by_video: Mapping[str, Sequence[Track]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for vid in sorted(tracks_by_video):
            for tr in tracks_by_video[vid]:
                for frame in tr.frames:
                    writer.writerow([vid, tr.track_id, frame, *(_fmt(c) for c in tr.boxes[frame])])


# -- the index ----------------------------------------------------------------

class FlowFieldTable(Mapping):
    """``(video_id, flip, time_step) -> magnitude array``.

    Only unflipped magnitudes are stored; flipped variants are mirrored views.
    """

    def __init__(self, fields: dict | None = None):
        self.fields: dict[str, np.ndarray] = dict(fields or {})  # video_id -> (T, H, W) float32

    def __getitem__(self, key):
        video_id, flip, t = key
        arr = self.fields[video_id][t]
        if flip == 1:
            return arr[:, ::-1]
        if flip == 2:
            return arr[::-1, :]
        return arr

    def __iter__(self):
        for vid in sorted(self.fields):
            for flip in range(len(FLIPS)):
                for t in range(len(self.fields[vid])):
                    yield (vid, flip, t)

    def __len__(self):
        return len(FLIPS) * sum(len(a) for a in self.fields.values())


@dataclass
class LibraryIndex:
    params: LibraryParams = field(default_factory=LibraryParams)
    videos: dict = field(default_factory=dict)  # video_id -> VideoInfo
    fragment_forward: dict = field(default_factory=dict)  # FragmentId -> frozenset[(w, tau)]
    fragment_inverse: dict = field(default_factory=dict)  # (w, tau) -> frozenset[FragmentId]
    flow_fields: FlowFieldTable = field(default_factory=FlowFieldTable)
    track_forward: dict = field(default_factory=dict)  # key -> Track
    track_inverse: dict = field(default_factory=dict)  # FragmentId -> frozenset[key]

    def fragment_frames(self, fid: FragmentId) -> range:
        step = self.params.step
        return range(fid.start_t * step, (fid.start_t + self.params.fragment_len) * step)

    def summary(self) -> dict:
        return {
            "videos": len(self.videos),
            "fragment_forward": len(self.fragment_forward),
            "fragment_inverse": len(self.fragment_inverse),
            "flow_fields": len(self.flow_fields),
            "track_forward": len(self.track_forward),
            "track_inverse": len(self.track_inverse),
        }


def track_key(video_id: str, flip: int, track_id: str) -> str:
    return f"{video_id}|{FLIPS[flip]}|{track_id}"


def _invert(forward: Mapping) -> dict:
    inverse: dict = defaultdict(set)
    for fid, acts in forward.items():
        for a in acts:
            inverse[a].add(fid)
    return {k: frozenset(v) for k, v in inverse.items()}


def _link_tracks(forward: Mapping, tracks: Mapping, step: int, fragment_len: int) -> dict:
    by_source = defaultdict(list)
    for key, tr in tracks.items():
        if tr.boxes:
            by_source[(tr.video_id, tr.flip)].append((key, *tr.span))
    inverse = {}
    for fid in forward:
        lo, hi = fid.start_t * step, (fid.start_t + fragment_len) * step
        keys = frozenset(k for k, a, b in by_source.get((fid.video_id, fid.flip), ()) if a < hi and b > lo)
        if keys:
            inverse[fid] = keys
    return inverse


def build_library(videos: Sequence[LibraryVideo], params: LibraryParams | None = None,
                  annotations: Mapping[str, Sequence[Track]] | None = None) -> LibraryIndex:
    """Index library videos at original scale plus horizontal and vertical flips.

    Tracks come from each video's ``tracks`` and, optionally, an extra
    ``annotations`` mapping keyed by video id.
    """
    params = params or LibraryParams()
    index = LibraryIndex(params)
    by_id = {v.video_id: v for v in videos}
    if len(by_id) != len(videos):
        raise ValueError("duplicate video ids in library")
    for vid in (annotations or {}):
        if vid not in by_id:
            raise LibraryReferenceError(f"annotations reference unknown video {vid!r}")

    for vid in sorted(by_id):
        video = by_id[vid]
        if "|" in vid or "/" in vid:
            raise ValueError(f"video id {vid!r} may not contain '|' or '/'")
        n_frames = len(video.flows)
        w, h = video.width, video.height
        steps = timestep_average(video.flows, params.step)
        index.videos[vid] = VideoInfo(w, h, n_frames, len(steps))
        index.flow_fields.fields[vid] = np.stack(
            [np.hypot(f.u, f.v) for f in steps]).astype(np.float32) if steps else np.zeros((0, h, w), np.float32)

        full = ScaleConfig(0, 1, 0, 0, w, h)
        tracks = list(video.tracks) + list((annotations or {}).get(vid, ()))
        for tr in tracks:
            for frame, box in tr.boxes.items():
                if not 0 <= frame < n_frames:
                    raise LibraryReferenceError(f"{vid}: track {tr.track_id} frame {frame} outside [0, {n_frames})")
                if not BoundingBox(*box).is_valid(w, h):
                    raise LibraryReferenceError(f"{vid}: track {tr.track_id} box {box} outside frame")
        for flip, name in enumerate(FLIPS):
            flipped = steps if flip == 0 else [flip_flow(f, name) for f in steps]
            doc = build_document(flipped, full, params.cube_base, params.mag_threshold,
                                 params.vote_threshold, params.step)
            for frag in fragmentize(doc, params.fragment_len, vid, flip):
                index.fragment_forward[frag.fragment_id] = frag.activations
            for tr in tracks:
                boxes = {f: BoundingBox(*(b if flip == 0 else flip_box(BoundingBox(*b), w, h, name)))
                         for f, b in tr.boxes.items()}
                key = track_key(vid, flip, tr.track_id)
                index.track_forward[key] = Track(tr.track_id, boxes, vid, flip)

    index.fragment_inverse = _invert(index.fragment_forward)
    index.track_inverse = _link_tracks(index.fragment_forward, index.track_forward,
                                       params.step, params.fragment_len)
    return index


def sample_sublibrary(index: LibraryIndex, gamma: float, seed: int = 0) -> LibraryIndex:
    """Keep ``ceil(gamma * n_videos)`` videos drawn uniformly with a seeded RNG."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    ids = sorted(index.videos)
    k = math.ceil(gamma * len(ids) - 1e-9)
    rng = np.random.default_rng(seed)
    keep = set(rng.choice(ids, size=k, replace=False).tolist()) if ids else set()
    forward = {f: a for f, a in index.fragment_forward.items() if f.video_id in keep}
    tracks = {k_: t for k_, t in index.track_forward.items() if t.video_id in keep}
    return LibraryIndex(
        params=index.params,
        videos={v: i for v, i in index.videos.items() if v in keep},
        fragment_forward=forward,
        fragment_inverse=_invert(forward),
        flow_fields=FlowFieldTable({v: a for v, a in index.flow_fields.fields.items() if v in keep}),
        track_forward=tracks,
        track_inverse={f: t for f, t in index.track_inverse.items() if f.video_id in keep},
    )


# -- persistence --------------------------------------------------------------

def _i32(*values) -> bytes:
    return np.asarray(values, dtype="<i4").tobytes()


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data, self.pos, self.name = data, 0, name

    def ints(self, n: int) -> np.ndarray:
        end = self.pos + 4 * n
        if end > len(self.data):
            raise FormatError(f"{self.name}: truncated")
        out = np.frombuffer(self.data, dtype="<i4", count=n, offset=self.pos)
        self.pos = end
        return out

    def floats(self, n: int, dtype: str = "<f8") -> np.ndarray:
        size = np.dtype(dtype).itemsize
        end = self.pos + size * n
        if end > len(self.data):
            raise FormatError(f"{self.name}: truncated")
        out = np.frombuffer(self.data, dtype=dtype, count=n, offset=self.pos)
        self.pos = end
        return out

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.name}: {len(self.data) - self.pos} trailing bytes")


def _serialize(index: LibraryIndex) -> tuple[dict, dict[str, bytes]]:
    vids = sorted(index.videos)
    vpos = {v: i for i, v in enumerate(vids)}
    frags = sorted(index.fragment_forward)
    fpos = {f: i for i, f in enumerate(frags)}
    tkeys = sorted(index.track_forward)
    tpos = {k: i for i, k in enumerate(tkeys)}

    parts = [_i32(len(frags))]
    for f in frags:
        acts = sorted(index.fragment_forward[f])
        parts.append(_i32(vpos[f.video_id], f.config_id, f.flip, f.start_t, len(acts)))
        parts.append(np.asarray(acts, dtype="<i4").reshape(-1).tobytes())
    forward = b"".join(parts)

    keys = sorted(index.fragment_inverse)
    parts = [_i32(len(keys))]
    for k in keys:
        members = sorted(fpos[f] for f in index.fragment_inverse[k])
        parts.append(_i32(k[0], k[1], len(members), *members))
    inverse = b"".join(parts)

    flows = b"".join(np.ascontiguousarray(index.flow_fields.fields[v], dtype="<f4").tobytes() for v in vids)

    parts = [_i32(len(tkeys))]
    for k in tkeys:
        tr = index.track_forward[k]
        frames = tr.frames
        parts.append(_i32(len(frames), *frames))
        parts.append(np.asarray([tr.boxes[f] for f in frames], dtype="<f8").reshape(-1).tobytes())
    tforward = b"".join(parts)

    tfr = sorted(index.track_inverse, key=fpos.__getitem__)
    parts = [_i32(len(tfr))]
    for f in tfr:
        members = sorted(tpos[k] for k in index.track_inverse[f])
        parts.append(_i32(fpos[f], len(members), *members))
    tinverse = b"".join(parts)

    tables = dict(zip(TABLE_FILES, (forward, inverse, flows, tforward, tinverse)))
    manifest = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "params": vars(index.params),
        "videos": [{"video_id": v, **index.videos[v]._asdict()} for v in vids],
        "tracks": [{"key": k, "track_id": index.track_forward[k].track_id,
                    "video": vpos[index.track_forward[k].video_id],
                    "flip": index.track_forward[k].flip} for k in tkeys],
        "sha256": {name: hashlib.sha256(data).hexdigest() for name, data in tables.items()},
    }
    return manifest, tables


def save_index(index: LibraryIndex, path) -> None:
    """Write a manifest plus one little-endian binary file per table."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest, tables = _serialize(index)
    for name, data in tables.items():
        (path / name).write_bytes(data)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_index(path) -> LibraryIndex:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable manifest: {exc}") from exc
    if manifest.get("format") != INDEX_FORMAT or manifest.get("version") != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index format/version "
                          f"{manifest.get('format')!r}/{manifest.get('version')!r}")
    tables = {}
    for name in TABLE_FILES:
        try:
            data = (path / name).read_bytes()
        except OSError as exc:
            raise FormatError(f"{path}: missing table {name}") from exc
        if hashlib.sha256(data).hexdigest() != manifest.get("sha256", {}).get(name):
            raise FormatError(f"{path}: checksum mismatch in {name}")
        tables[name] = data
    try:
        return _deserialize(manifest, tables)
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise FormatError(f"{path}: corrupt index: {exc}") from exc


def _deserialize(manifest: dict, tables: dict[str, bytes]) -> LibraryIndex:
    params = LibraryParams(**manifest["params"])
    vids = [v["video_id"] for v in manifest["videos"]]
    videos = {v["video_id"]: VideoInfo(v["width"], v["height"], v["n_frames"], v["n_steps"])
              for v in manifest["videos"]}

    r = _Reader(tables["fragment_forward.bin"], "fragment_forward")
    frags = []
    forward = {}
    for _ in range(int(r.ints(1)[0])):
        vi, cfg, flip, start, n = r.ints(5).tolist()
        fid = FragmentId(vids[vi], cfg, flip, start)
        acts = r.ints(2 * n).reshape(-1, 2).tolist()
        forward[fid] = frozenset(map(tuple, acts))
        frags.append(fid)
    r.done()

    r = _Reader(tables["fragment_inverse.bin"], "fragment_inverse")
    inverse = {}
    for _ in range(int(r.ints(1)[0])):
        w, tau, n = r.ints(3).tolist()
        inverse[(w, tau)] = frozenset(frags[i] for i in r.ints(n).tolist())
    r.done()

    r = _Reader(tables["flow_fields.bin"], "flow_fields")
    fields = {}
    for v in vids:
        info = videos[v]
        count = info.n_steps * info.height * info.width
        fields[v] = r.floats(count, "<f4").reshape(info.n_steps, info.height, info.width).copy()
    r.done()

    r = _Reader(tables["track_forward.bin"], "track_forward")
    meta = manifest["tracks"]
    tracks = {}
    n_tracks = int(r.ints(1)[0])
    if n_tracks != len(meta):
        raise FormatError("track count disagrees with manifest")
    for m in meta:
        n = int(r.ints(1)[0])
        frames = r.ints(n).tolist()
        coords = r.floats(4 * n).reshape(n, 4).tolist()
        boxes = {f: BoundingBox(*c) for f, c in zip(frames, coords)}
        tracks[m["key"]] = Track(m["track_id"], boxes, vids[m["video"]], m["flip"])
    r.done()

    r = _Reader(tables["track_inverse.bin"], "track_inverse")
    tkeys = [m["key"] for m in meta]
    tinverse = {}
    for _ in range(int(r.ints(1)[0])):
        fi, n = r.ints(2).tolist()
        tinverse[frags[fi]] = frozenset(tkeys[i] for i in r.ints(n).tolist())
    r.done()

    return LibraryIndex(params, videos, forward, inverse, FlowFieldTable(fields), tracks, tinverse)


def integrity_errors(index: LibraryIndex) -> list[str]:
    """Transpose and referential-integrity problems; empty when consistent."""
    problems = []
    for fid, acts in index.fragment_forward.items():
        if fid.video_id not in index.videos:
            problems.append(f"fragment {fid} references unknown video")
        for a in acts:
            if fid not in index.fragment_inverse.get(a, ()):
                problems.append(f"inverse[{a}] lacks {fid}")
    for a, fids in index.fragment_inverse.items():
        for fid in fids:
            if a not in index.fragment_forward.get(fid, ()):
                problems.append(f"forward[{fid}] lacks {a}")
    for fid, keys in index.track_inverse.items():
        if fid not in index.fragment_forward:
            problems.append(f"track_inverse references missing fragment {fid}")
        for k in keys:
            if k not in index.track_forward:
                problems.append(f"track_inverse[{fid}] references missing track {k}")
    for k, tr in index.track_forward.items():
        if tr.video_id not in index.videos:
            problems.append(f"track {k} references unknown video")
    if set(index.flow_fields.fields) != set(index.videos):
        problems.append("flow_fields videos differ from the video table")
    return problems
