"""Command line driver: ``searchtrack {build,track,eval,sweep,synth}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import EmptyOverlap, FormatError, SearchTrackError
from .estimator import SearchTracker
from .flow import IMAGE_SUFFIXES
from .library import LibraryVideo, load_index, read_annotations, sample_sublibrary, save_index, write_tracks
from .metrics import clear_mot, select_hypothesis, single_target_scores
from .synth import SCENARIOS, render, scenario, write_synthetic
from .validation import load_video

log = logging.getLogger("searchtrack")


class InputError(Exception):
    """Bad user input; exits with status 2."""


def _config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    if not Path(path).is_file():
        raise InputError(f"config file not found: {path}")
    try:
        return RunConfig.from_json(path)
    except (ValueError, TypeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _require(path, kind="file") -> Path:
    p = Path(path)
    ok = p.is_file() if kind == "file" else p.is_dir()
    if not ok:
        raise InputError(f"{kind} not found: {path}")
    return p


def _video_dirs(root: Path) -> list[Path]:
    return sorted(d for d in root.iterdir()
                  if d.is_dir() and any(p.suffix.lower() in IMAGE_SUFFIXES for p in d.iterdir()))


def cmd_build(args) -> int:
    cfg = _config(args.config)
    videos_root = _require(args.videos, "directory")
    annotations = read_annotations(_require(args.annotations))
    videos = []
    for d in _video_dirs(videos_root):
        _, flows = load_video(d, smoothness=cfg.flow_smoothness, iterations=cfg.flow_iterations)
        videos.append(LibraryVideo(d.name, flows))
    if not videos:
        raise InputError(f"no video directories with PGM/PPM frames under {videos_root}")
    est = SearchTracker.from_config(cfg).fit(videos, annotations)
    save_index(est.index_, args.out)
    for name, size in est.index_.summary().items():
        print(f"{name}: {size}")
    return 0


def _track(index, query_dir, flows_dir, cfg: RunConfig):
    frames, flows = load_video(query_dir, flows_dir, cfg.flow_smoothness, cfg.flow_iterations)
    est = SearchTracker.from_config(cfg).set_index(index)
    return est.predict(frames, flows), frames.video_id


def cmd_track(args) -> int:
    cfg = _config(args.config)
    index = load_index(_require(args.index, "directory"))
    tracks, vid = _track(index, _require(args.query, "directory"), args.flows, cfg)
    write_tracks(args.out, {vid: tracks})
    print(f"{len(tracks)} tracks written to {args.out}")
    return 0


def evaluate_single(gt_by_video, hyp_by_video) -> dict:
    """Per-GT-track scores, averaged over frames, then tracks."""
    per_track = []
    for vid in sorted(gt_by_video):
        for gt in gt_by_video[vid]:
            try:
                s = single_target_scores(gt, select_hypothesis(gt, hyp_by_video.get(vid, [])))
            except EmptyOverlap:
                n = len(gt.boxes)
                s = None
            per_track.append((vid, gt.track_id, s, None if s else n))
    scored = [s for *_, s, _ in per_track if s is not None]
    ious = [np.array(s.ious) if s else np.zeros(n) for _, _, s, n in per_track]
    errs = [np.array(s.errors) if s else np.full(n, np.inf) for _, _, s, n in per_track]
    overlap = [(t, float(np.mean([np.mean(i >= t) for i in ious]))) for t in np.round(np.linspace(0, 1, 21), 2)]
    distance = [(d, float(np.mean([np.mean(e <= d) for e in errs]))) for d in range(51)]
    return {
        "mode": "single",
        "tracks": [{"video_id": v, "track_id": t,
                    "mean_voc": s.mean_voc if s else 0.0,
                    "mean_cle": s.mean_cle if s else None,
                    "overlap_precision": s.overlap_precision(0.5) if s else 0.0,
                    "distance_precision": s.distance_precision(20) if s else 0.0}
                   for v, t, s, _ in per_track],
        "mean_voc": float(np.mean([float(np.mean(i)) for i in ious])) if ious else 0.0,
        "mean_cle": float(np.mean([s.mean_cle for s in scored])) if scored else None,
        "overlap_precision": float(np.mean([np.mean(i >= 0.5) for i in ious])) if ious else 0.0,
        "distance_precision": float(np.mean([np.mean(e <= 20) for e in errs])) if errs else 0.0,
        "overlap_curve": overlap,
        "distance_curve": distance,
    }


def evaluate_clear(gt_by_video, hyp_by_video, threshold: float = 0.5) -> dict:
    videos = {}
    totals = dict(misses=0, false_positives=0, id_switches=0, matches=0, n_gt=0)
    overlap_sum = 0.0
    for vid in sorted(gt_by_video):
        r = clear_mot(gt_by_video[vid], hyp_by_video.get(vid, []), threshold)
        videos[vid] = {"mota": r.mota, "motp": r.motp, "misses": r.misses,
                       "false_positives": r.false_positives, "id_switches": r.id_switches,
                       "matches": r.matches, "n_gt": r.n_gt}
        for k in totals:
            totals[k] += getattr(r, k)
        overlap_sum += r.motp / 100.0 * r.matches
    errors = totals["misses"] + totals["false_positives"] + totals["id_switches"]
    return {
        "mode": "clear",
        "threshold": threshold,
        "videos": videos,
        "mota": 100.0 * (1 - errors / totals["n_gt"]) if totals["n_gt"] else None,
        "motp": 100.0 * overlap_sum / totals["matches"] if totals["matches"] else 0.0,
        **totals,
    }


def _write_curve(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_eval(args) -> int:
    gt = read_annotations(_require(args.gt))
    hyp = read_annotations(_require(args.hyp))
    if args.mode == "single":
        report = evaluate_single(gt, hyp)
        out = Path(args.out)
        _write_curve(out.with_name(out.stem + "_overlap.csv"), ["threshold", "overlap_precision"],
                     report["overlap_curve"])
        _write_curve(out.with_name(out.stem + "_distance.csv"), ["threshold_px", "distance_precision"],
                     report["distance_curve"])
    else:
        report = evaluate_clear(gt, hyp, args.threshold)
    Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    keys = ("mean_voc", "mean_cle", "overlap_precision", "distance_precision") if args.mode == "single" \
        else ("mota", "motp", "misses", "false_positives", "id_switches")
    for k in keys:
        print(f"{k}: {report[k]}")
    return 0


def sweep(param: str, values, index, query_dir, gt, cfg: RunConfig, flows_dir=None,
          repeats: int = 1) -> list[tuple[float, float, float]]:
    """(value, overlap precision @0.5, distance precision @20px) per swept value.

    Gamma values draw ``repeats`` sub-libraries (seeds ``cfg.seed + k``) and
    average their scores.
    """
    frames, flows = load_video(query_dir, flows_dir, cfg.flow_smoothness, cfg.flow_iterations)
    rows = []
    for value in values:
        scores = []
        for k in range(repeats if param == "gamma" else 1):
            run_cfg = RunConfig(**{**vars(cfg), "alpha": value}) if param == "alpha" else cfg
            sub = sample_sublibrary(index, value, cfg.seed + k) if param == "gamma" else index
            tracks = SearchTracker.from_config(run_cfg).set_index(sub).predict(frames, flows)
            report = evaluate_single(gt, {frames.video_id: tracks})
            scores.append((report["overlap_precision"], report["distance_precision"]))
        op, dp = np.mean(scores, axis=0)
        rows.append((float(value), float(op), float(dp)))
        log.info("%s=%s op=%.3f dp=%.3f", param, value, op, dp)
    return rows


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"--values must be comma-separated numbers: {args.values}") from exc
    if not values:
        raise InputError("--values is empty")
    if args.param == "gamma" and not all(0 < v <= 1 for v in values):
        raise InputError("gamma values must lie in (0, 1]")
    if args.param == "alpha" and not all(v > 0 for v in values):
        raise InputError("alpha values must be > 0")
    index = load_index(_require(args.index, "directory"))
    gt = read_annotations(_require(args.gt))
    rows = sweep(args.param, values, index, _require(args.query, "directory"), gt, cfg, args.flows,
                 args.repeats)
    _write_curve(Path(args.out), [args.param, "overlap_precision", "distance_precision"], rows)
    for row in rows:
        print(",".join(f"{x:g}" for x in row))
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out)
    vid = f"{args.scenario}_{args.seed}"
    video = render(scenario(args.scenario, n_frames=args.frames), args.seed, vid)
    root = write_synthetic(video, out)
    merged = {}
    for gt in sorted(out.glob("*/gt.csv")):
        merged.update(read_annotations(gt))
    write_tracks(out / "annotations.csv", merged)
    print(f"wrote {root} ({len(video.frames)} frames, {len(video.tracks)} tracks)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="searchtrack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="index an annotated video library")
    p.add_argument("--videos", required=True, help="directory of video subdirectories")
    p.add_argument("--annotations", required=True, help="annotation CSV")
    p.add_argument("--out", required=True, help="index directory to write")
    p.add_argument("--config", help="JSON run configuration")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("track", help="track objects in a query video")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True, help="directory of query frames")
    p.add_argument("--out", required=True, help="track CSV to write")
    p.add_argument("--flows", help="directory of .flo files for the query")
    p.add_argument("--config")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score tracks against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--mode", choices=("single", "clear"), default="single")
    p.add_argument("--threshold", type=float, default=0.5, help="CLEAR IoU match threshold")
    p.add_argument("--out", required=True, help="JSON report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="library-size (gamma) or warping-penalty (alpha) sweep")
    p.add_argument("--param", choices=("gamma", "alpha"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="CSV to write")
    p.add_argument("--flows")
    p.add_argument("--repeats", type=int, default=1, help="sub-libraries per gamma value")
    p.add_argument("--config")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic video with ground truth and analytic flow")
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", choices=SCENARIOS, default="moving_square")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=100)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SearchTrackError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
