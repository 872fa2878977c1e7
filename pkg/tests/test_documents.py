import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from searchtrack.documents import (MotionCode, MotionDocument, ScaleConfig, build_document, cube_grid,
                                   direction_votes, encode_cube, flip_box, flip_video, flip_word,
                                   fragmentize, multiscale_configs, n_words)
from searchtrack.errors import GeometryError
from searchtrack.flow import FlowField
from searchtrack.library import BoundingBox

from conftest import make_field

FULL = ScaleConfig(0, 1, 0, 0, 320, 240)


class TestEncodeCube:
    def test_up(self):
        assert encode_cube([(0, -2)] * 9) == MotionCode(True, False, False, False)

    def test_diagonal_splits(self):
        vec = np.array([-2.0, -2.0]) / np.sqrt(8) * 2
        assert encode_cube([vec] * 9) == MotionCode(True, True, False, False)

    def test_below_threshold(self):
        assert encode_cube([(0.5, 0.0)] * 9) == MotionCode(False, False, False, False)

    def test_threshold_is_strict_on_magnitude(self):
        # a vector of exactly mag_threshold does not vote
        assert not any(encode_cube([(1.0, 0.0)] * 4))

    def test_vote_fraction(self):
        # one of ten vectors moving right: fraction 0.1 meets the 0.10 threshold
        vecs = [(3.0, 0.0)] + [(0.0, 0.0)] * 9
        assert encode_cube(vecs) == MotionCode(False, False, False, True)
        assert not any(encode_cube([(3.0, 0.0)] + [(0.0, 0.0)] * 10))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=30), st.randoms())
    def test_order_invariant(self, vecs, rnd):
        shuffled = list(vecs)
        rnd.shuffle(shuffled)
        assert encode_cube(vecs) == encode_cube(shuffled)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_soft_votes(self, u, v):
        votes = direction_votes(np.array([u]), np.array([v]))[0]
        assert np.all(votes >= 0) and np.all(votes <= 1)
        assert np.count_nonzero(votes) <= 2

    def test_axis_aligned_single_direction(self):
        votes = direction_votes(np.array([3.0, 0.0]), np.array([0.0, 3.0]))
        assert votes[0].tolist() == [0, 0, 0, 1]
        assert votes[1].tolist() == [0, 0, 1, 0]


class TestBuildDocument:
    def test_w_full_frame(self):
        doc = build_document([FlowField.zeros(320, 240)], FULL, 20)
        assert doc.W == 768 == n_words(320, 240, 20, 20)

    def test_w_quadrant(self):
        quad = ScaleConfig(1, 2, 0, 0, 160, 120)
        assert cube_grid(quad, 20).cube_w == 10
        assert build_document([FlowField.zeros(320, 240)], quad, 20).W == 768

    def test_zero_flow(self):
        flows = [FlowField.zeros(320, 240)] * 5
        doc = build_document(flows, FULL, 20)
        assert doc.T == 5 and not doc.activations

    def test_word_layout(self):
        # rightward motion in the cube at row 1, col 2 activates word (1 * 16 + 2) * 4 + 3
        u = np.zeros((240, 320))
        u[20:40, 40:60] = 2.0
        doc = build_document([FlowField(u, np.zeros_like(u))], FULL, 20)
        assert doc.activations == {((1 * 16 + 2) * 4 + 3, 0)}

    def test_indivisible_region(self):
        with pytest.raises(GeometryError):
            build_document([FlowField.zeros(330, 240)], ScaleConfig(0, 1, 0, 0, 330, 240), 20)

    @pytest.mark.parametrize("size", [(320, 240), (160, 80), (240, 240)])
    def test_w_constant_across_configs(self, size):
        w, h = size
        flows = [FlowField.zeros(w, h)]
        ws = {build_document(flows, c, 20).W for c in multiscale_configs(w, h)}
        assert ws == {w * h * 4 // 400}

    def test_flip_equivariance(self):
        rng = np.random.default_rng(3)
        u = np.repeat(np.repeat(rng.normal(0, 3, (12, 16)), 20, 0), 20, 1)
        v = np.repeat(np.repeat(rng.normal(0, 3, (12, 16)), 20, 0), 20, 1)
        flows = [FlowField(u, v), FlowField(v, -u)]
        doc = build_document(flows, FULL, 20)
        for axis in ("h", "v"):
            flipped = build_document(flip_video(flows, axis), FULL, 20)
            mapped = {(flip_word(w, doc.grid, axis), t) for w, t in doc.activations}
            assert flipped.activations == mapped


class TestMultiscale:
    def test_count_and_quadrants(self):
        configs = multiscale_configs(320, 240)
        assert len(configs) == 21
        quads = [(c.x, c.y, c.width, c.height) for c in configs if c.level == 2]
        assert quads == [(0, 0, 160, 120), (160, 0, 160, 120), (0, 120, 160, 120), (160, 120, 160, 120)]
        assert {(c.width, c.height) for c in configs if c.level == 4} == {(80, 60)}

    def test_levels_tile_frame(self):
        configs = multiscale_configs(320, 240)
        for level in (1, 2, 4):
            area = sum(c.width * c.height for c in configs if c.level == level)
            assert area == 320 * 240
        assert [c.config_id for c in configs] == list(range(21))


class TestFragmentize:
    def _doc(self, T, acts=()):
        m = np.zeros((8, T), dtype=bool)
        for w, t in acts:
            m[w, t] = True
        return MotionDocument(m)

    def test_count(self):
        assert len(fragmentize(self._doc(20), 8)) == 13

    def test_rebased(self):
        frags = {f.fragment_id.start_t: f.activations for f in fragmentize(self._doc(20, [(5, 9)]), 8)}
        assert (5, 7) in frags[2] and (5, 0) in frags[9]
        assert sorted(s for s, a in frags.items() if a) == list(range(2, 10))

    def test_whole_document(self):
        doc = self._doc(8, [(1, 0), (7, 7)])
        frags = fragmentize(doc, 8)
        assert len(frags) == 1 and frags[0].activations == doc.activations

    def test_short_document(self):
        assert fragmentize(self._doc(5), 8) == []

    def test_lossless(self):
        rng = np.random.default_rng(0)
        doc = MotionDocument(rng.random((8, 15)) < 0.3)
        frags = fragmentize(doc, 4)
        for f in frags:
            s = f.fragment_id.start_t
            expected = {(w, t - s) for w, t in doc.activations if s <= t < s + 4}
            assert f.activations == expected
            assert all(0 <= tau < 4 for _, tau in f.activations)


class TestFlips:
    def test_flow_mirror(self):
        u = np.zeros((2, 5))
        v = np.zeros((2, 5))
        u[0, 1], v[0, 1] = 2.0, 1.0
        f = flip_video(FlowField(u, v), "h")
        assert (f.u[0, 3], f.v[0, 3]) == (-2.0, 1.0)

    def test_involution(self):
        rng = np.random.default_rng(1)
        f = FlowField(rng.normal(size=(6, 7)), rng.normal(size=(6, 7)))
        for axis in ("h", "v"):
            g = flip_video(flip_video(f, axis), axis)
            assert np.array_equal(g.u, f.u) and np.array_equal(g.v, f.v)
        frame = rng.integers(0, 255, (6, 7, 3))
        assert np.array_equal(flip_video(flip_video(frame, "v"), "v"), frame)

    def test_box(self):
        assert flip_box(BoundingBox(10, 20, 30, 40), 320, 240, "h") == (290, 20, 310, 40)
        assert flip_box(BoundingBox(10, 20, 30, 40), 320, 240, "v") == (10, 200, 30, 220)

    def test_word_involution(self):
        grid = cube_grid(FULL, 20)
        for axis in ("h", "v"):
            assert all(flip_word(flip_word(w, grid, axis), grid, axis) == w for w in range(grid.n_words))

    def test_constant_field(self):
        f = flip_video(make_field(1.0, 2.0), "v")
        assert np.all(f.u == 1.0) and np.all(f.v == -2.0)
