"""Transfer of library annotations onto a query, flow-driven box warping, and NMS."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from .documents import FragmentId, ScaleConfig
from .library import BoundingBox, LibraryIndex
from .metrics import iou
from .retrieval import CompositionResult

EDGES = ("left", "top", "right", "bottom")
MIN_SIZE = 2


@dataclass(frozen=True)
class WarpParams:
    alpha: float = 2000.0
    n_bins: int = 16
    batches: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")
        if self.batches < 1:
            raise ValueError("batches must be >= 1")


@dataclass(frozen=True)
class CandidateBox:
    frame: int
    box: BoundingBox
    source: tuple  # (library FragmentId, track key)
    lib_frame: int = 0
    config_id: int = 0
    match_score: float = 0.0
    warp_score: float = 0.0


def map_box(box, src_width: int, src_height: int, config: ScaleConfig) -> BoundingBox:
    """Map a box from a library frame into a query config's sub-rectangle.

    Coordinates are rounded to whole pixels in full-query-frame coordinates.
    """
    sx = config.width / src_width
    sy = config.height / src_height
    rnd = lambda x: float(math.floor(x + 0.5))
    return BoundingBox(rnd(config.x + box[0] * sx), rnd(config.y + box[1] * sy),
                       rnd(config.x + box[2] * sx), rnd(config.y + box[3] * sy))


def transfer_boxes(result: CompositionResult, index: LibraryIndex, config: ScaleConfig,
                   n_frames: int | None = None) -> list[CandidateBox]:
    """Candidate query boxes for every track of every chosen library fragment.

    Query frame ``start_q * step + o`` receives the library box of frame
    ``start_r * step + o`` for each offset ``o`` inside the fragment window.
    """
    step = index.params.step
    q_start = result.query_fragment_id.start_t * step
    out = []
    for fid, h in result.chosen:
        info = index.videos[fid.video_id]
        r_start = fid.start_t * step
        for key in sorted(index.track_inverse.get(fid, ())):
            track = index.track_forward[key]
            for offset in range(index.params.fragment_len * step):
                box = track.boxes.get(r_start + offset)
                frame = q_start + offset
                if box is None or (n_frames is not None and frame >= n_frames):
                    continue
                mapped = map_box(box, info.width, info.height, config)
                if mapped.right - mapped.left < 1 or mapped.bottom - mapped.top < 1:
                    continue
                out.append(CandidateBox(frame, mapped, (fid, key), r_start + offset,
                                        config.config_id, result.final_score))
    return out


def result_magnitude(index: LibraryIndex, fid: FragmentId, lib_frame: int, config: ScaleConfig,
                     query_shape: tuple[int, int]) -> np.ndarray:
    """Library flow magnitude for ``lib_frame`` resampled into query coordinates.

    Nearest-neighbour resampling into the config region; magnitudes are scaled
    by the linear scale factor so they stay in query pixels. Zero elsewhere.
    """
    src = np.asarray(index.flow_fields[(fid.video_id, fid.flip, lib_frame // index.params.step)],
                     dtype=np.float64)
    lh, lw = src.shape
    rows = np.minimum(((np.arange(config.height) + 0.5) * lh / config.height).astype(int), lh - 1)
    cols = np.minimum(((np.arange(config.width) + 0.5) * lw / config.width).astype(int), lw - 1)
    scale = math.sqrt((config.width / lw) * (config.height / lh))
    out = np.zeros(query_shape)
    out[config.y:config.y + config.height, config.x:config.x + config.width] = src[np.ix_(rows, cols)] * scale
    return out


def _bin_edges(query_mag, result_mag, b_q, b_r, n_bins):
    h, w = query_mag.shape
    x0 = max(int(min(b_q[0], b_r[0])), 0)
    y0 = max(int(min(b_q[1], b_r[1])), 0)
    x1 = min(int(max(b_q[2], b_r[2])), w)
    y1 = min(int(max(b_q[3], b_r[3])), h)
    hi = 0.0
    if x1 > x0 and y1 > y0:
        hi = max(float(query_mag[y0:y1, x0:x1].max()), float(result_mag[y0:y1, x0:x1].max()))
    return np.linspace(0.0, hi, n_bins + 1)


def _bin_index(values, edges):
    # magnitudes are >= 0 = edges[0], so only the top needs clipping
    n = len(edges) - 1
    if edges[-1] <= 0:
        return np.zeros(values.shape, dtype=np.intp)
    idx = edges.searchsorted(values, side="right")
    idx -= 1
    return np.minimum(idx, n - 1, out=idx)


@functools.lru_cache(maxsize=16)
def _gaussian_table(alpha: float, reach: int) -> np.ndarray:
    # exp(-d^2 / (2 alpha)) for integer offsets d = 0..reach
    return np.array([math.exp(-(d * d) / (2.0 * alpha)) for d in range(reach + 1)])


def _cumulative_counts(idx, n_bins):
    # (n_bins, lines + 1) bin counts of idx[:k] for every prefix length k
    lines = idx.shape[0]
    flat = (np.arange(lines)[:, None] * n_bins + idx).ravel()
    per_line = np.bincount(flat, minlength=lines * n_bins).reshape(lines, n_bins).T
    cum = np.zeros((n_bins, lines + 1), dtype=np.int64)
    np.cumsum(per_line, axis=1, out=cum[:, 1:])
    return cum


def edge_candidates(edge: str, b_q, b_r, width: int, height: int, alpha: float) -> range:
    """Integer positions searched for ``edge``: within 3 sigma of the result edge, keeping a 2x2 box."""
    k = EDGES.index(edge)
    e_r = b_r[k]
    radius = 3.0 * math.sqrt(alpha)
    lo, hi = math.ceil(e_r - radius), math.floor(e_r + radius)
    if edge == "left":
        lo, hi = max(lo, 0), min(hi, int(b_q[2]) - MIN_SIZE)
    elif edge == "right":
        lo, hi = max(lo, int(b_q[0]) + MIN_SIZE), min(hi, width)
    elif edge == "top":
        lo, hi = max(lo, 0), min(hi, int(b_q[3]) - MIN_SIZE)
    else:
        lo, hi = max(lo, int(b_q[1]) + MIN_SIZE), min(hi, height)
    return range(lo, hi + 1)


def edge_objective(edge: str, b_q, b_r, query_mag, result_mag, params: WarpParams):
    """Candidate positions and their warping objective for one edge.

    objective(e) = histogram_intersection(H(result in b_r), H(query in b_q with
    edge at e)) * exp(-(e_r - e)^2 / (2 alpha)). Intersections are computed from
    integer counts so equal values compare exactly equal.
    """
    query_mag = np.asarray(query_mag)
    result_mag = np.asarray(result_mag)
    height, width = query_mag.shape
    cands = edge_candidates(edge, b_q, b_r, width, height, params.alpha)
    if len(cands) == 0:
        return cands, np.zeros(0)
    n = params.n_bins
    edges = _bin_edges(query_mag, result_mag, b_q, b_r, n)
    l, t, r, b = (int(c) for c in b_q)
    rl, rt, rr, rb = (int(c) for c in b_r)
    ref_vals = result_mag[rt:rb, rl:rr]
    ref_counts = np.bincount(_bin_index(ref_vals, edges).ravel(), minlength=n).astype(np.int64)
    ref_area = ref_vals.size

    pos = np.arange(cands.start, cands.stop, dtype=np.int64)
    if edge in ("left", "right"):
        c0 = min(l, pos[0]) if edge == "left" else l
        c1 = max(r, pos[-1]) if edge == "right" else r
        cum = _cumulative_counts(_bin_index(query_mag[t:b, c0:c1], edges).T, n)
        if edge == "left":
            counts = cum[:, r - c0][:, None] - cum[:, pos - c0]
            areas = (r - pos) * (b - t)
        else:
            counts = cum[:, pos - c0] - cum[:, l - c0][:, None]
            areas = (pos - l) * (b - t)
    else:
        r0 = min(t, pos[0]) if edge == "top" else t
        r1 = max(b, pos[-1]) if edge == "bottom" else b
        cum = _cumulative_counts(_bin_index(query_mag[r0:r1, l:r], edges), n)
        if edge == "top":
            counts = cum[:, b - r0][:, None] - cum[:, pos - r0]
            areas = (b - pos) * (r - l)
        else:
            counts = cum[:, pos - r0] - cum[:, t - r0][:, None]
            areas = (pos - t) * (r - l)

    if ref_area == 0:
        inter = np.zeros(len(pos))
    else:
        num = np.minimum(ref_counts[:, None] * areas[None, :], counts * ref_area).sum(axis=0)
        inter = num / (areas * ref_area)
    e_r = b_r[EDGES.index(edge)]
    if float(e_r).is_integer():
        offsets = np.abs(pos - int(e_r))
        gauss = _gaussian_table(params.alpha, int(offsets.max()))[offsets]
    else:
        gauss = np.array([math.exp(-((e_r - p) ** 2) / (2.0 * params.alpha)) for p in pos.tolist()])
    return cands, inter * gauss


def warp_edge(edge: str, b_q, b_r, query_mag, result_mag, params: WarpParams | None = None) -> int:
    """Best position for one edge of ``b_q`` (exhaustive integer search).

    Ties go to the position closest to the result edge, then the smaller one.
    """
    params = params or WarpParams()
    cands, obj = edge_objective(edge, b_q, b_r, query_mag, result_mag, params)
    k = EDGES.index(edge)
    if len(cands) == 0:
        return int(b_q[k])
    e_r = b_r[k]
    pos = np.asarray(cands, dtype=np.float64)
    # lexsort's last key is primary; the final element is the best
    best = np.lexsort((-pos, -np.abs(pos - e_r), obj))[-1]
    return int(cands[best])


def warp_box(b_q, b_r, query_mag, result_mag, params: WarpParams | None = None,
             seed=None) -> BoundingBox:
    """Refine ``b_q`` by rounds of randomly ordered edge updates.

    Stops early after a round that leaves every edge unchanged.
    """
    params = params or WarpParams()
    rng = np.random.default_rng(params.seed if seed is None else seed)
    box = [int(c) for c in b_q]
    for _ in range(params.batches):
        changed = False
        for k in rng.permutation(4):
            new = warp_edge(EDGES[k], box, b_r, query_mag, result_mag, params)
            if new != box[k]:
                box[k] = new
                changed = True
        if not changed:
            break
    return BoundingBox(*(float(c) for c in box))


def flow_density(box, mag: np.ndarray) -> float:
    l, t, r, b = (int(round(c)) for c in box)
    region = mag[max(t, 0):b, max(l, 0):r]
    return float(region.mean()) if region.size else 0.0


def _covered(box, by) -> float:
    # fraction of box's area inside ``by``
    w = min(box[2], by[2]) - max(box[0], by[0])
    h = min(box[3], by[3]) - max(box[1], by[1])
    area = (box[2] - box[0]) * (box[3] - box[1])
    if w <= 0 or h <= 0 or area <= 0:
        return 0.0
    return w * h / area


def nms(candidates, query_mag: np.ndarray, iou_threshold: float = 0.5,
        min_density: float | None = None, containment: float | None = None) -> list[CandidateBox]:
    """Greedy suppression of one frame's boxes ranked by mean flow magnitude.

    With ``min_density`` set, boxes whose density does not exceed it are
    dropped before suppression. With ``containment`` set, a box is also
    suppressed when more than that fraction of its own area lies inside an
    already kept box; mean-magnitude ranking otherwise lets thin strips
    along an object's edge survive next to the object box.
    """
    scored = [replace(c, warp_score=flow_density(c.box, query_mag)) for c in candidates]
    if min_density is not None:
        scored = [c for c in scored if c.warp_score > min_density]
    scored.sort(key=lambda c: (-c.warp_score, -c.match_score, tuple(c.box)))
    kept: list[CandidateBox] = []
    for c in scored:
        if any(iou(c.box, k.box) > iou_threshold for k in kept):
            continue
        if containment is not None and any(_covered(c.box, k.box) > containment for k in kept):
            continue
        kept.append(c)
    return kept
