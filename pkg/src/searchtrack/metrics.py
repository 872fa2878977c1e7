"""Single-target (VOC, CLE, precision curves) and CLEAR MOT evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyOverlap, UndefinedMetric

OVERLAP_THRESHOLDS = tuple(np.round(np.linspace(0.0, 1.0, 21), 2).tolist())
DISTANCE_THRESHOLDS = tuple(range(0, 51))


def iou(a, b) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union)


def center(box) -> tuple[float, float]:
    return (box[0] + box[2]) / 2, (box[1] + box[3]) / 2


def cle(a, b) -> float:
    (ax, ay), (bx, by) = center(a), center(b)
    return math.hypot(ax - bx, ay - by)


@dataclass
class SingleTargetScores:
    ious: list
    errors: list  # center errors; inf where the hypothesis is missing
    mean_voc: float
    mean_cle: float

    def overlap_precision(self, threshold: float = 0.5) -> float:
        return float(np.mean([v >= threshold for v in self.ious]))

    def distance_precision(self, threshold: float = 20.0) -> float:
        return float(np.mean([e <= threshold for e in self.errors]))

    def overlap_curve(self, thresholds=OVERLAP_THRESHOLDS) -> list[tuple[float, float]]:
        return [(t, self.overlap_precision(t)) for t in thresholds]

    def distance_curve(self, thresholds=DISTANCE_THRESHOLDS) -> list[tuple[float, float]]:
        return [(d, self.distance_precision(d)) for d in thresholds]


def single_target_scores(gt, hyp) -> SingleTargetScores:
    """Per-frame IoU and center error over the ground-truth span.

    Frames where the hypothesis has no box score IoU 0 and an infinite center
    error; they are left out of the mean CLE but fail every distance threshold.
    """
    gt_frames = gt.frames
    if not set(gt_frames) & set(hyp.boxes):
        raise EmptyOverlap(f"tracks {gt.track_id} and {hyp.track_id} share no frames")
    ious, errors = [], []
    for f in gt_frames:
        box = hyp.boxes.get(f)
        if box is None:
            ious.append(0.0)
            errors.append(math.inf)
        else:
            ious.append(iou(gt.boxes[f], box))
            errors.append(cle(gt.boxes[f], box))
    finite = [e for e in errors if math.isfinite(e)]
    return SingleTargetScores(ious, errors, float(np.mean(ious)), float(np.mean(finite)))


def select_hypothesis(gt, hyps):
    """Hypothesis track overlapping ``gt`` on the most frames.

    Overlap means both tracks have a box in the frame and the boxes
    intersect. Ties go to the larger summed IoU, then the smaller track id.
    """
    best, best_key = None, None
    for h in hyps:
        shared = [f for f in gt.boxes if f in h.boxes]
        ious = [iou(gt.boxes[f], h.boxes[f]) for f in shared]
        key = (sum(v > 0 for v in ious), sum(ious), len(shared))
        if key[2] == 0:
            continue
        if best is None or key > best_key or (key == best_key and h.track_id < best.track_id):
            best, best_key = h, key
    if best is None:
        raise EmptyOverlap(f"no hypothesis track overlaps ground truth {gt.track_id}")
    return best


@dataclass
class FrameEval:
    frame: int
    matches: list = field(default_factory=list)  # (gt_id, hyp_id, iou, center_error)
    misses: int = 0
    false_positives: int = 0
    id_switches: int = 0


@dataclass
class ClearMotResult:
    mota: float
    motp: float
    misses: int
    false_positives: int
    id_switches: int
    matches: int
    n_gt: int
    frames: list = field(default_factory=list)


def clear_mot(gt_tracks, hyp_tracks, match_threshold: float = 0.5) -> ClearMotResult:
    """CLEAR MOT accuracy and precision, both scaled so 100 is perfect.

    A correspondence carried from the previous frame is kept while its IoU
    stays at or above ``match_threshold``; remaining objects are matched by a
    Hungarian assignment on ``1 - IoU``. MOTP is the mean IoU of matches.
    """
    from .association import hungarian_assign

    if not 0 < match_threshold < 1:
        raise ValueError("match_threshold must be in (0, 1)")
    gt_by_frame: dict[int, dict] = {}
    hyp_by_frame: dict[int, dict] = {}
    for tr in gt_tracks:
        for f, b in tr.boxes.items():
            gt_by_frame.setdefault(f, {})[tr.track_id] = b
    for tr in hyp_tracks:
        for f, b in tr.boxes.items():
            hyp_by_frame.setdefault(f, {})[tr.track_id] = b
    n_gt = sum(len(v) for v in gt_by_frame.values())
    if n_gt == 0:
        raise UndefinedMetric("MOTA is undefined without ground-truth boxes")

    last_match: dict = {}  # gt id -> hyp id of its most recent correspondence
    prev_pairs: dict = {}  # correspondences active in the previous frame
    evals = []
    overlaps = []
    for f in sorted(set(gt_by_frame) | set(hyp_by_frame)):
        gts = gt_by_frame.get(f, {})
        hyps = hyp_by_frame.get(f, {})
        ev = FrameEval(f)
        pairs = {}
        for g, h in prev_pairs.items():
            if g in gts and h in hyps:
                v = iou(gts[g], hyps[h])
                if v >= match_threshold:
                    pairs[g] = h
        free_g = sorted(g for g in gts if g not in pairs)
        used_h = set(pairs.values())
        free_h = sorted(h for h in hyps if h not in used_h)
        if free_g and free_h:
            ov = np.array([[iou(gts[g], hyps[h]) for h in free_h] for g in free_g])
            cost = np.where(ov >= match_threshold, 1.0 - ov, 2.0)
            assigned, _ = hungarian_assign(cost)
            for i, j in assigned:
                if ov[i, j] >= match_threshold:
                    g, h = free_g[i], free_h[j]
                    if g in last_match and last_match[g] != h:
                        ev.id_switches += 1
                    pairs[g] = h
        for g, h in sorted(pairs.items()):
            v = iou(gts[g], hyps[h])
            ev.matches.append((g, h, v, cle(gts[g], hyps[h])))
            overlaps.append(v)
            last_match[g] = h
        ev.misses = len(gts) - len(pairs)
        ev.false_positives = len(hyps) - len(pairs)
        evals.append(ev)
        prev_pairs = pairs

    misses = sum(e.misses for e in evals)
    fps = sum(e.false_positives for e in evals)
    switches = sum(e.id_switches for e in evals)
    mota = 100.0 * (1.0 - (misses + fps + switches) / n_gt)
    motp = 100.0 * float(np.mean(overlaps)) if overlaps else 0.0
    return ClearMotResult(mota, motp, misses, fps, switches, len(overlaps), n_gt, evals)
