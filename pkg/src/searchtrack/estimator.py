"""Estimator interface: ``fit`` indexes an annotated library, ``predict`` tracks a query."""
from __future__ import annotations

import logging
from collections import defaultdict

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .association import AssociationParams, link_tracks, smooth_tracks
from .config import RunConfig
from .documents import multiscale_configs
from .errors import EmptyOverlap, GeometryError
from .flow import FrameSequence, frame_flows, timestep_average
from .library import LibraryIndex, LibraryParams, LibraryVideo, build_library
from .metrics import select_hypothesis, single_target_scores
from .retrieval import RetrievalParams, query_video
from .transfer import WarpParams, nms, result_magnitude, transfer_boxes, warp_box
from .validation import check_flows, crop_video, query_cube

log = logging.getLogger(__name__)


class SearchTracker(BaseEstimator):
    """Tracker that retrieves motion-similar library fragments and transfers their boxes.

    Parameters mirror :class:`~searchtrack.config.RunConfig`.
    """

    def __init__(self, cube_base=20, step=4, fragment_len=8, mag_threshold=1.0, vote_threshold=0.10,
                 rho=0.1, max_iterations=16, alpha=2000.0, n_bins=16, batches=10, iou_threshold=0.5,
                 min_density=0.0, containment=0.7, beta=2.5, gate_distance=50.0, half_window=2,
                 flow_smoothness=0.1, flow_iterations=200, seed=0):
        self.cube_base = cube_base
        self.step = step
        self.fragment_len = fragment_len
        self.mag_threshold = mag_threshold
        self.vote_threshold = vote_threshold
        self.rho = rho
        self.max_iterations = max_iterations
        self.alpha = alpha
        self.n_bins = n_bins
        self.batches = batches
        self.iou_threshold = iou_threshold
        self.min_density = min_density
        self.containment = containment
        self.beta = beta
        self.gate_distance = gate_distance
        self.half_window = half_window
        self.flow_smoothness = flow_smoothness
        self.flow_iterations = flow_iterations
        self.seed = seed

    @classmethod
    def from_config(cls, config: RunConfig) -> "SearchTracker":
        return cls(**vars(config.validate()))

    def _config(self) -> RunConfig:
        return RunConfig(**self.get_params()).validate()

    def fit(self, X, y=None):
        """Index library videos.

        ``X`` is a sequence of :class:`LibraryVideo`; ``y`` optionally maps
        video ids to extra annotation tracks.
        """
        cfg = self._config()
        videos = []
        for video in X:
            _, flows, tracks = crop_video(None, check_flows(video.flows), video.tracks, 4 * cfg.cube_base)
            videos.append(LibraryVideo(video.video_id, flows, tracks))
        params = LibraryParams(cfg.cube_base, cfg.step, cfg.fragment_len, cfg.mag_threshold, cfg.vote_threshold)
        return self.set_index(build_library(videos, params, y))

    def set_index(self, index: LibraryIndex):
        """Use an existing (e.g. loaded) index; its document parameters win."""
        p = index.params
        self.set_params(cube_base=p.cube_base, step=p.step, fragment_len=p.fragment_len,
                        mag_threshold=p.mag_threshold, vote_threshold=p.vote_threshold)
        grids = {(v.width // p.cube_base, v.height // p.cube_base) for v in index.videos.values()}
        if len(grids) > 1:
            raise GeometryError(f"library videos have different word grids: {sorted(grids)}")
        self.index_ = index
        self.grid_ = grids.pop() if grids else None
        return self

    def predict(self, X: FrameSequence, flows=None):
        """Tracks for one query video (list of :class:`Track`)."""
        check_is_fitted(self, "index_")
        cfg = self._config()
        index = self.index_
        if flows is None:
            flows = frame_flows(X, cfg.flow_smoothness, cfg.flow_iterations)
        flows = check_flows(flows)
        if len(flows) < len(X):
            flows = flows + [flows[-1]] * (len(X) - len(flows))
        frames, flows, _ = crop_video(X, flows, [], 4 * cfg.cube_base)
        height, width = flows[0].u.shape
        if self.grid_ is None:
            return []
        cube = query_cube(width, height, self.grid_, cfg.cube_base)

        steps = timestep_average(flows, cfg.step)
        query_mags = [np.hypot(f.u, f.v) for f in steps]
        configs = multiscale_configs(width, height)
        results = query_video(steps, index, RetrievalParams(cfg.rho, cfg.max_iterations),
                              frames.video_id, cube_base=cube, configs=configs)
        log.info("%d nonempty query fragments composed", len(results))

        # identical candidates warp identically; keep one per warp input
        unique = {}
        for res in results:
            for cand in transfer_boxes(res, index, configs[res.config_id], len(frames)):
                fid, _ = cand.source
                key = (cand.frame, tuple(cand.box), fid.video_id, fid.flip, cand.lib_frame // cfg.step,
                       cand.config_id)
                if key not in unique or cand.match_score > unique[key].match_score:
                    unique[key] = cand

        warp = WarpParams(cfg.alpha, cfg.n_bins, cfg.batches, cfg.seed)
        mag_cache = {}
        per_frame = defaultdict(list)
        for key in sorted(unique, key=repr):
            cand = unique[key]
            fid, _ = cand.source
            mkey = key[2:]
            if mkey not in mag_cache:
                mag_cache[mkey] = result_magnitude(index, fid, cand.lib_frame, configs[cand.config_id],
                                                   (height, width))
            seed = [cfg.seed, cand.frame, cand.config_id, *(int(c) for c in cand.box)]
            box = warp_box(cand.box, cand.box, query_mags[cand.frame // cfg.step], mag_cache[mkey], warp, seed)
            per_frame[cand.frame].append(type(cand)(cand.frame, box, cand.source, cand.lib_frame,
                                                    cand.config_id, cand.match_score))
        log.info("%d unique candidate boxes warped", len(unique))

        n_frames = len(steps) * cfg.step
        # boxes are ranked on each frame's own flow, where an exact object box attains the peak density
        kept = [nms(per_frame.get(f, []), np.hypot(flows[f].u, flows[f].v), cfg.iou_threshold, cfg.min_density,
                    cfg.containment)
                for f in range(n_frames)]
        images = frames.frames[:n_frames]
        tracks = link_tracks(kept, images, AssociationParams(cfg.beta, cfg.gate_distance))
        tracks = smooth_tracks(tracks, cfg.half_window, width, height)
        for tr in tracks:
            tr.video_id = frames.video_id
        return tracks

    def score(self, X, y, flows=None):
        """Mean VOC overlap over the ground-truth tracks ``y`` of query ``X``."""
        hyps = self.predict(X, flows)
        values = []
        for gt in y:
            try:
                values.append(single_target_scores(gt, select_hypothesis(gt, hyps)).mean_voc)
            except EmptyOverlap:
                values.append(0.0)
        return float(np.mean(values)) if values else 0.0
