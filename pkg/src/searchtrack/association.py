"""Linking per-frame boxes into tracks and smoothing them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .library import BoundingBox, Track

H_BINS = 10
S_BINS = 5


@dataclass(frozen=True)
class AssociationParams:
    beta: float = 2.5
    gate_distance: float = 50.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.gate_distance <= 0:
            raise ValueError("gate_distance must be > 0")


def rgb_to_hs(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hue in degrees [0, 360) and saturation in [0, 1] of uint8 RGB pixels."""
    rgb = np.asarray(pixels, dtype=np.float64).reshape(-1, 3) / 255.0
    r, g, b = rgb.T
    hi = rgb.max(axis=1)
    lo = rgb.min(axis=1)
    chroma = hi - lo
    sat = np.divide(chroma, hi, out=np.zeros_like(hi), where=hi > 0)
    safe = np.where(chroma > 0, chroma, 1.0)
    hue = np.select(
        [chroma == 0, hi == r, hi == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        (r - g) / safe + 4.0,
    ) * 60.0
    return hue % 360.0, sat


def hsv_histogram(frame: np.ndarray, box) -> np.ndarray:
    """Joint 10x5 hue/saturation histogram of the pixels inside ``box``.

    Normalized to sum 1; all zeros for an empty box. Zero-saturation pixels
    fall in hue bin 0.
    """
    l, t, r, b = (int(round(c)) for c in box)
    patch = np.asarray(frame)[max(t, 0):b, max(l, 0):r]
    hist = np.zeros((H_BINS, S_BINS))
    if patch.size == 0:
        return hist
    hue, sat = rgb_to_hs(patch[..., :3])
    hb = np.minimum((hue / (360.0 / H_BINS)).astype(int), H_BINS - 1)
    hb[sat == 0] = 0
    sb = np.minimum((sat * S_BINS).astype(int), S_BINS - 1)
    np.add.at(hist, (hb, sb), 1.0)
    return hist / hist.sum()


def histogram_distance(h1: np.ndarray, h2: np.ndarray) -> float:
    return 1.0 - float(np.minimum(h1, h2).sum())


def pair_cost(hist_i, hist_j, center_i, center_j, beta: float) -> float:
    dist = float(np.hypot(center_i[0] - center_j[0], center_i[1] - center_j[1]))
    return histogram_distance(hist_i, hist_j) + beta * dist


def association_cost(frame_i, box_i, frame_j, box_j, params: AssociationParams | None = None) -> float:
    """Histogram-intersection distance plus ``beta`` times the center distance."""
    params = params or AssociationParams()
    return pair_cost(hsv_histogram(frame_i, box_i), hsv_histogram(frame_j, box_j),
                     BoundingBox(*box_i).center, BoundingBox(*box_j).center, params.beta)


def _hungarian_square(cost: np.ndarray) -> np.ndarray:
    # shortest augmenting path with row/column potentials, O(n^3)
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=int)  # owner[j] = row (1-based) assigned to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assignment = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        assignment[owner[j] - 1] = j - 1
    return assignment


def hungarian_assign(cost_matrix) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost one-to-one assignment of ``min(n, m)`` row/column pairs.

    Rectangular inputs are padded to square with a sentinel of 10x the largest
    cost. Returns the pairs sorted by row and their total cost (summed in row
    order).
    """
    cost = np.asarray(cost_matrix, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    n, m = cost.shape
    if n == 0 or m == 0:
        return [], 0.0
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    size = max(n, m)
    sentinel = 10.0 * max(float(np.abs(cost).max()), 1.0)
    square = np.full((size, size), sentinel)
    square[:n, :m] = cost
    assignment = _hungarian_square(square)
    pairs = [(i, int(assignment[i])) for i in range(n) if assignment[i] < m]
    total = 0.0
    for i, j in pairs:
        total += cost[i, j]
    return pairs, total


def link_tracks(frames, images=None, params: AssociationParams | None = None,
                start_frame: int = 0) -> list[Track]:
    """Frame-by-frame Hungarian linking of per-frame boxes into tracks.

    ``frames[k]`` holds the boxes of frame ``start_frame + k``. Pairs whose
    centers are farther apart than ``gate_distance`` cannot be linked; boxes
    left unmatched start new tracks and unmatched tracks end. Track ids are
    ``"0", "1", ...`` in creation order.
    """
    params = params or AssociationParams()
    tracks: list[Track] = []
    active: list[tuple[Track, BoundingBox, np.ndarray | None]] = []
    for k, boxes in enumerate(frames):
        frame = start_frame + k
        boxes = [BoundingBox(*getattr(b, "box", b)) for b in boxes]
        image = None if images is None else images[k]
        hists = [None if image is None else hsv_histogram(image, b) for b in boxes]
        matched = {}
        if active and boxes:
            feasible = np.zeros((len(active), len(boxes)), dtype=bool)
            cost = np.zeros(feasible.shape)
            for i, (_, prev, prev_hist) in enumerate(active):
                for j, box in enumerate(boxes):
                    pc, bc = prev.center, box.center
                    dist = float(np.hypot(pc[0] - bc[0], pc[1] - bc[1]))
                    feasible[i, j] = dist <= params.gate_distance
                    hd = 0.0 if prev_hist is None or hists[j] is None else histogram_distance(prev_hist, hists[j])
                    cost[i, j] = hd + params.beta * dist
            forbidden = float(cost[feasible].sum()) + 1.0
            pairs, _ = hungarian_assign(np.where(feasible, cost, forbidden))
            matched = {j: i for i, j in pairs if feasible[i, j]}
        next_active = []
        for j, box in enumerate(boxes):
            if j in matched:
                track = active[matched[j]][0]
            else:
                track = Track(str(len(tracks)))
                tracks.append(track)
            track.boxes[frame] = box
            next_active.append((track, box, hists[j]))
        active = next_active
    return tracks


def smooth_tracks(tracks, half_window: int = 2, width: float | None = None,
                  height: float | None = None) -> list[Track]:
    """Moving average of box center and size over ``[t - k, t + k]`` within each track."""
    if half_window < 0:
        raise ValueError("half_window must be >= 0")
    out = []
    for tr in tracks:
        frames = tr.frames
        if not frames:
            out.append(Track(tr.track_id, {}, tr.video_id, tr.flip))
            continue
        arr = np.array([[*tr.boxes[f].center, tr.boxes[f].width, tr.boxes[f].height] for f in frames])
        boxes = {}
        for i, f in enumerate(frames):
            lo, hi = max(0, i - half_window), min(len(frames), i + half_window + 1)
            cx, cy, w, h = arr[lo:hi].sum(axis=0) / (hi - lo)
            l, t, r, b = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
            if width is not None:
                l, r = max(l, 0.0), min(r, float(width))
            if height is not None:
                t, b = max(t, 0.0), min(b, float(height))
            boxes[f] = BoundingBox(float(l), float(t), float(r), float(b))
        out.append(Track(tr.track_id, boxes, tr.video_id, tr.flip))
    return out
