"""Acceptance criteria, one test each.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL: <detail>`` line to
the terminal (even under output capture) before asserting.
"""
import time

import numpy as np
import pytest

from searchtrack import SearchTracker
from searchtrack.association import hungarian_assign
from searchtrack.cli import main, sweep
from searchtrack.config import RunConfig
from searchtrack.documents import build_document, multiscale_configs, n_words
from searchtrack.flow import FlowField, pad_flows, timestep_average
from searchtrack.library import (LibraryVideo, build_library, integrity_errors, load_index, read_annotations,
                                 sample_sublibrary, save_index)
from searchtrack.metrics import clear_mot, iou, select_hypothesis, single_target_scores
from searchtrack.retrieval import RetrievalParams, greedy_compose
from searchtrack.synth import MovingObject, Scene, render, write_synthetic
from searchtrack.transfer import EDGES, warp_edge

from cases import random_greedy_case, random_warp_case, tiny_index
from oracles import brute_force_assignment, greedy_step, index_problems, warp_edge_grid
from scenarios import SCENARIOS


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return _report


def _lib_video(video):
    return LibraryVideo(video.frames.video_id, pad_flows(video.flows, len(video.frames)), video.tracks)


# off-centre movers in every direction, so no fragment equals its own mirror image
ASYMMETRIC = {
    "east": Scene((MovingObject("0", 20, 30, 60, 40, 4, 0),), n_frames=48),
    "south": Scene((MovingObject("0", 230, 10, 40, 60, 0, 3),), n_frames=48),
    "diagonal": Scene((MovingObject("0", 30, 150, 40, 40, 3, -2), MovingObject("1", 250, 20, 30, 50, -2, 2)),
                      n_frames=48),
}


@pytest.fixture(scope="module")
def asymmetric_index():
    videos = [_lib_video(render(scene, seed=20 + i, video_id=name)) for i, (name, scene) in enumerate(ASYMMETRIC.items())]
    return build_library(videos)


def test_1_exact_match_retrieval(asymmetric_index, report):
    index = asymmetric_index
    nonempty = {f: a for f, a in index.fragment_forward.items() if a}
    assert len(set(nonempty.values())) == len(nonempty), "library must not contain duplicate fragments"
    start = time.perf_counter()
    hits = 0
    for fid, acts in nonempty.items():
        top, h = greedy_compose(acts, index).chosen[0]
        hits += top == fid and h == 1.0
    elapsed = time.perf_counter() - start
    report(1, hits == len(nonempty) and elapsed < 10,
           f"{hits}/{len(nonempty)} fragments returned themselves first at score 1.0 in {elapsed:.2f}s")


@pytest.mark.slow
@pytest.mark.parametrize("scenario_name,seed", [("moving_square", 7), ("two_movers", 3)])
def test_2_ground_truth_reproduction(tmp_path, report, scenario_name, seed):
    corpus = tmp_path / "corpus"
    assert main(["synth", "--out", str(corpus), "--scenario", scenario_name, "--seed", str(seed),
                 "--frames", "100"]) == 0
    video = corpus / f"{scenario_name}_{seed}"
    assert main(["build", "--videos", str(corpus), "--annotations", str(corpus / "annotations.csv"),
                 "--out", str(tmp_path / "index")]) == 0
    start = time.perf_counter()
    assert main(["track", "--index", str(tmp_path / "index"), "--query", str(video),
                 "--out", str(tmp_path / "tracks.csv")]) == 0
    elapsed = time.perf_counter() - start
    hyps = read_annotations(tmp_path / "tracks.csv")[video.name]
    worst = 1.0
    for gt in read_annotations(video / "gt.csv")[video.name]:
        best = select_hypothesis(gt, hyps)
        interior = gt.frames[2:-2]
        worst = min([worst] + [iou(best.boxes[f], gt.boxes[f]) if f in best.boxes else 0.0 for f in interior])
    report(2, worst == 1.0 and elapsed < 60,
           f"{scenario_name}: min interior IoU {worst:.3f}, track took {elapsed:.1f}s")


def test_3_hungarian_oracle(report):
    mismatches = 0
    for n in range(2, 8):
        for seed in range(100):
            cost = np.random.default_rng(1000 * n + seed).integers(0, 100, (n, n)).astype(float)
            mismatches += hungarian_assign(cost)[1] != brute_force_assignment(cost)
    report(3, mismatches == 0, f"{mismatches} mismatches over 600 matrices, n = 2..7")


def test_4_greedy_oracle(report):
    failures = []
    for seed in range(50):
        f_q, forward = random_greedy_case(10_000 + seed)
        trace = []
        res = greedy_compose(f_q, tiny_index(forward), RetrievalParams(rho=0.0), trace=trace)
        chosen = []
        for (fid, _), scores in zip(res.chosen, trace):
            oracle = greedy_step(f_q, forward, chosen)
            best = max(oracle.values())
            if oracle[fid] != best or set(scores) != set(oracle):
                failures.append(seed)
            chosen.append(fid)
        if res.covered < max(len(f_q & acts) for acts in forward.values()):
            failures.append(seed)
    report(4, not failures, f"50 libraries, failing seeds: {sorted(set(failures)) or 'none'}")


def test_5_warp_oracle(report):
    mismatches = 0
    for seed in range(100):
        b_q, b_r, q, r, params = random_warp_case(20_000 + seed)
        for edge in EDGES:
            mismatches += warp_edge(edge, b_q, b_r, q, r, params) != warp_edge_grid(
                edge, b_q, b_r, q, r, params.alpha, params.n_bins)
    moved = 0
    for seed in range(20):
        b_q, _, q, _, params = random_warp_case(30_000 + seed)
        moved += sum(warp_edge(e, b_q, b_q, q, q, params) != b_q[EDGES.index(e)] for e in EDGES)
    report(5, mismatches == 0 and moved == 0,
           f"{mismatches} argmax mismatches over 400 edges; {moved} fixed-point edges moved")


@pytest.mark.parametrize("width,height", [(320, 240), (640, 480), (160, 160)])
def test_6_word_count(report, width, height):
    cube = 20 if (width, height) != (640, 480) else 40
    flows = [FlowField(np.full((height, width), 2.0), np.zeros((height, width)))] * 8
    steps = timestep_average(flows)
    counts = {build_document(steps, cfg, cube).W for cfg in multiscale_configs(width, height)}
    expected = n_words(width, height, cube, cube)
    ok = counts == {expected} and len(multiscale_configs(width, height)) == 21
    if (width, height) == (320, 240):
        ok &= expected == 768
    report(6, ok, f"{width}x{height}: W = {sorted(counts)} across 21 configurations")


def test_7_clear_oracle(report):
    errors = []
    for name, build in SCENARIOS.items():
        gt, hyp, expected = build()
        r = clear_mot(gt, hyp)
        errors.append(max(abs(r.mota - expected["mota"]), abs(r.motp - expected["motp"])))
    gt, hyp, _ = SCENARIOS["perfect"]()
    perfect = clear_mot(gt, hyp)
    ok = max(errors) < 1e-9 and (perfect.mota, perfect.motp) == (100.0, 100.0)
    report(7, ok, f"max error {max(errors):.1e}; perfect = {perfect.mota}/{perfect.motp}")


LIBRARY_SCENE = Scene((MovingObject("0", 20, 80, 80, 80, 4, 0),), n_frames=48)


@pytest.fixture(scope="module")
def e2e_library():
    return _lib_video(render(LIBRARY_SCENE, seed=1, video_id="lib"))


def test_8_end_to_end(e2e_library, report):
    # the library mover is the query mover scaled 2x, moved into the lower-right quadrant
    query = render(LIBRARY_SCENE.transformed(0.5, (160, 120)), seed=2, video_id="query")
    start = time.perf_counter()
    est = SearchTracker().fit([e2e_library])
    tracks = est.predict(query.frames, pad_flows(query.flows, len(query.frames)))
    elapsed = time.perf_counter() - start
    gt = query.tracks[0]
    s = single_target_scores(gt, select_hypothesis(gt, tracks))
    ok = s.mean_voc >= 0.5 and s.distance_precision(20) >= 0.8 and elapsed < 300
    report(8, ok, f"mean IoU {s.mean_voc:.3f}, DP@20 {s.distance_precision(20):.3f}, {elapsed:.1f}s")


SWEEP_LIBRARY = {
    "match": LIBRARY_SCENE,
    "down": Scene((MovingObject("0", 120, 10, 80, 80, 0, 4),), n_frames=48),
    "down2": Scene((MovingObject("0", 40, 20, 60, 60, 0, 3),), n_frames=48),
    "pair": Scene((MovingObject("0", 20, 20, 60, 60, 0, 3), MovingObject("1", 200, 20, 60, 60, 0, 3)),
                  n_frames=48),
}
GAMMA_QUERY = Scene((MovingObject("0", 170, 160, 40, 40, 2, 0),), n_frames=48)
# off the cube grid, so transferred boxes must be warped to fit
ALPHA_QUERY = Scene((MovingObject("0", 170, 174, 40, 40, 2, 0),), n_frames=48)


@pytest.mark.slow
def test_9_sweeps(tmp_path, report):
    videos = [_lib_video(render(sc, seed=10 + i, video_id=name)) for i, (name, sc) in enumerate(SWEEP_LIBRARY.items())]
    index = build_library(videos)
    scores = {}
    for name, scene, values in (("gamma", GAMMA_QUERY, [0.5, 1.0]), ("alpha", ALPHA_QUERY, [1.0, 2000.0])):
        query_dir = write_synthetic(render(scene, seed=2, video_id=name), tmp_path)
        gt = read_annotations(query_dir / "gt.csv")
        rows = sweep(name, values, index, query_dir, gt, RunConfig(), repeats=4)
        scores[name] = {v: op + dp for v, op, dp in rows}
    gamma, alpha = scores["gamma"], scores["alpha"]
    ok = gamma[1.0] >= gamma[0.5] and alpha[2000.0] > alpha[1.0]
    report(9, ok, f"gamma 0.5 -> {gamma[0.5]:.3f}, 1.0 -> {gamma[1.0]:.3f}; "
                  f"alpha 1 -> {alpha[1.0]:.3f}, 2000 -> {alpha[2000.0]:.3f} (OP@0.5 + DP@20)")


def test_10_index_integrity(asymmetric_index, tmp_path, report):
    index = asymmetric_index
    problems = {"build": index_problems(index) + integrity_errors(index)}
    save_index(index, tmp_path / "a")
    loaded = load_index(tmp_path / "a")
    problems["load"] = index_problems(loaded) + integrity_errors(loaded)
    save_index(loaded, tmp_path / "b")
    problems["resave"] = [p.name for p in sorted((tmp_path / "a").iterdir())
                          if p.read_bytes() != (tmp_path / "b" / p.name).read_bytes()]
    for gamma in (0.34, 0.67):
        sub = sample_sublibrary(index, gamma, seed=1)
        problems[f"gamma {gamma}"] = index_problems(sub) + integrity_errors(sub)
    bad = {k: v for k, v in problems.items() if v}
    report(10, not bad, f"checked {', '.join(problems)}; problems: {bad or 'none'}")
