import json

import numpy as np
import pytest

from searchtrack.documents import FragmentId
from searchtrack.errors import FormatError, LibraryReferenceError
from searchtrack.flow import FlowField
from searchtrack.library import (BoundingBox, LibraryIndex, LibraryParams, LibraryVideo, Track,
                                 build_library, integrity_errors, load_index, read_annotations,
                                 sample_sublibrary, save_index, write_tracks)

from conftest import library_video
from oracles import index_problems


def _tables(index):
    return (index.params, index.videos, index.fragment_forward, index.fragment_inverse,
            {k: index.flow_fields.fields[k].tobytes() for k in index.flow_fields.fields},
            index.track_forward, index.track_inverse)


def _random_library(seed, n_videos=3, n_frames=32, size=(80, 80)):
    rng = np.random.default_rng(seed)
    videos = []
    for i in range(n_videos):
        flows = []
        for _ in range(n_frames):
            u = np.repeat(np.repeat(rng.normal(0, 2, (size[1] // 20, size[0] // 20)), 20, 0), 20, 1)
            v = np.repeat(np.repeat(rng.normal(0, 2, (size[1] // 20, size[0] // 20)), 20, 0), 20, 1)
            flows.append(FlowField(u, v))
        tracks = [Track("0", {f: BoundingBox(10, 10, 30, 30) for f in range(4, 12)})] if i % 2 == 0 else []
        videos.append(LibraryVideo(f"v{i}", flows, tracks))
    return build_library(videos)


class TestBuild:
    def test_single_fragment_per_flip(self):
        flows = [FlowField(np.full((40, 40), 2.0), np.zeros((40, 40)))] * 32
        track = Track("a", {f: BoundingBox(0, 0, 20, 20) for f in range(32)})
        index = build_library([LibraryVideo("v", flows, [track])])
        assert len(index.fragment_forward) == 3
        assert {f.flip for f in index.fragment_forward} == {0, 1, 2}
        assert all(len(index.track_inverse[f]) == 1 for f in index.fragment_forward)

    def test_no_tracks(self):
        flows = [FlowField(np.full((40, 40), 2.0), np.zeros((40, 40)))] * 32
        index = build_library([LibraryVideo("v", flows)])
        assert not index.track_forward and not index.track_inverse
        assert index.fragment_forward and index.fragment_inverse

    def test_flipped_tracks(self):
        flows = [FlowField.zeros(80, 40)] * 32
        track = Track("a", {0: BoundingBox(10, 5, 30, 15)})
        index = build_library([LibraryVideo("v", flows, [track])])
        assert index.track_forward["v|h|a"].boxes[0] == (50, 5, 70, 15)
        assert index.track_forward["v|v|a"].boxes[0] == (10, 25, 30, 35)

    def test_track_links_by_span(self):
        flows = [FlowField.zeros(40, 40)] * 48  # 12 steps, 5 fragments
        track = Track("a", {f: BoundingBox(0, 0, 10, 10) for f in range(40, 44)})
        index = build_library([LibraryVideo("v", flows, [track])])
        linked = sorted(f.start_t for f in index.track_inverse if f.flip == 0)
        # frames 40..43 lie in step 10, covered by windows starting at 3 and 4
        assert linked == [3, 4]

    @pytest.mark.parametrize("seed", range(5))
    def test_transpose(self, seed):
        index = _random_library(seed)
        assert index_problems(index) == []
        assert integrity_errors(index) == []

    def test_unknown_video(self):
        with pytest.raises(LibraryReferenceError):
            build_library([LibraryVideo("v", [FlowField.zeros(40, 40)] * 8)], annotations={"w": []})

    def test_frame_out_of_range(self):
        track = Track("a", {9: BoundingBox(0, 0, 10, 10)})
        with pytest.raises(LibraryReferenceError):
            build_library([LibraryVideo("v", [FlowField.zeros(40, 40)] * 8, [track])])

    def test_flow_fields_are_views(self, small_index):
        vid = "square"
        base = small_index.flow_fields[(vid, 0, 3)]
        assert np.array_equal(small_index.flow_fields[(vid, 1, 3)], base[:, ::-1])
        assert np.array_equal(small_index.flow_fields[(vid, 2, 3)], base[::-1])
        assert len(small_index.flow_fields) == 3 * sum(v.n_steps for v in small_index.videos.values())


class TestPersistence:
    def test_roundtrip(self, small_index, tmp_path):
        save_index(small_index, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx")
        assert _tables(loaded) == _tables(small_index)
        assert index_problems(loaded) == []

    def test_byte_identical_resave(self, small_index, tmp_path):
        save_index(small_index, tmp_path / "a")
        save_index(load_index(tmp_path / "a"), tmp_path / "b")
        for p in sorted((tmp_path / "a").iterdir()):
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes(), p.name

    def test_layout(self, small_index, tmp_path):
        save_index(small_index, tmp_path / "idx")
        names = sorted(p.name for p in (tmp_path / "idx").iterdir())
        assert names == ["flow_fields.bin", "fragment_forward.bin", "fragment_inverse.bin", "manifest.json",
                         "track_forward.bin", "track_inverse.bin"]

    def test_wrong_version(self, small_index, tmp_path):
        save_index(small_index, tmp_path / "idx")
        path = tmp_path / "idx" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["version"] = 999
        path.write_text(json.dumps(manifest))
        with pytest.raises(FormatError):
            load_index(tmp_path / "idx")

    def test_corrupt_table(self, small_index, tmp_path):
        save_index(small_index, tmp_path / "idx")
        p = tmp_path / "idx" / "fragment_inverse.bin"
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError):
            load_index(tmp_path / "idx")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError):
            load_index(tmp_path)

    def test_empty(self, tmp_path):
        save_index(LibraryIndex(), tmp_path / "idx")
        loaded = load_index(tmp_path / "idx")
        assert loaded.summary() == LibraryIndex().summary()
        assert loaded.params == LibraryParams()


class TestSublibrary:
    def test_identity(self, small_index):
        assert _tables(sample_sublibrary(small_index, 1.0, 0)) == _tables(small_index)

    def test_half_of_ten(self):
        flows = [FlowField.zeros(40, 40)] * 32
        index = build_library([LibraryVideo(f"v{i}", flows) for i in range(10)])
        a = sample_sublibrary(index, 0.5, seed=4)
        assert len(a.videos) == 5
        assert sorted(a.videos) == sorted(sample_sublibrary(index, 0.5, seed=4).videos)

    @pytest.mark.parametrize("seed", range(4))
    def test_consistent(self, seed):
        index = _random_library(seed, n_videos=5)
        sub = sample_sublibrary(index, 0.6, seed)
        assert len(sub.videos) == 3
        assert index_problems(sub) == []
        kept = set(sub.videos)
        assert {f.video_id for f in sub.fragment_forward} <= kept
        # flip variants follow their source video
        for f in sub.fragment_forward:
            for flip in range(3):
                assert FragmentId(f.video_id, f.config_id, flip, f.start_t) in sub.fragment_forward

    def test_bad_gamma(self, small_index):
        with pytest.raises(ValueError):
            sample_sublibrary(small_index, 0.0)


class TestAnnotations:
    def test_roundtrip(self, tmp_path, square_video):
        write_tracks(tmp_path / "a.csv", {"square": square_video.tracks})
        back = read_annotations(tmp_path / "a.csv")
        assert back["square"][0].boxes == square_video.tracks[0].boxes

    def test_header(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("vid,track,frame,l,t,r,b\n")
        with pytest.raises(FormatError):
            read_annotations(p)

    def test_bad_row(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("video_id,track_id,frame,left,top,right,bottom\nv,0,1,5,5,2,9\n")
        with pytest.raises(FormatError):
            read_annotations(p)

    def test_fractional_coordinates(self, tmp_path):
        write_tracks(tmp_path / "a.csv", {"v": [Track("0", {0: BoundingBox(0.5, 1, 10.25, 7)})]})
        assert "0.5,1,10.25,7" in (tmp_path / "a.csv").read_text()
