import numpy as np
import pytest

from searchtrack.flow import FlowField, pad_flows
from searchtrack.library import LibraryVideo, build_library
from searchtrack.synth import MovingObject, Scene, render, scenario


def make_field(u, v=None, shape=(4, 4)):
    u = np.full(shape, u, dtype=np.float64) if np.isscalar(u) else np.asarray(u, dtype=np.float64)
    v = np.zeros_like(u) if v is None else (np.full(u.shape, v, dtype=np.float64) if np.isscalar(v) else v)
    return FlowField(u, np.asarray(v, dtype=np.float64))


def library_video(video):
    return LibraryVideo(video.frames.video_id, pad_flows(video.flows, len(video.frames)), video.tracks)


@pytest.fixture(scope="session")
def square_video():
    return render(scenario("moving_square", n_frames=48), seed=7, video_id="square")


@pytest.fixture(scope="session")
def two_movers_video():
    return render(scenario("two_movers", n_frames=48), seed=3, video_id="pair")


@pytest.fixture(scope="session")
def small_index(square_video, two_movers_video):
    return build_library([library_video(square_video), library_video(two_movers_video)])


@pytest.fixture(scope="session")
def vertical_video():
    scene = Scene((MovingObject("0", 100, 20, 60, 60, 0, 3),), n_frames=48)
    return render(scene, seed=5, video_id="vertical")
