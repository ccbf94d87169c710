import numpy as np
import pytest

from ndvr.feature_store import FrameFeature, VideoFeatures

FIXTURES = __import__("pathlib").Path(__file__).resolve().parent.parent / "fixtures"


def make_video(fc_rows, fps=2.0, video_id="vid", conv_rows=None):
    """Build a VideoFeatures from per-frame fc vectors (and optional conv vectors)."""
    frames = []
    for i, fc in enumerate(fc_rows):
        convs = conv_rows[i] if conv_rows is not None else (np.ones(2), np.ones(3))
        frames.append(
            FrameFeature(
                frame_index=i,
                timestamp=i / fps,
                fc_vector=np.asarray(fc, dtype=np.float64),
                conv_vectors=tuple(np.asarray(c, dtype=np.float64) for c in convs),
            )
        )
    return VideoFeatures(video_id=video_id, fps=fps, frames=tuple(frames))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_video(rng, n_frames, fc_dim=6, layer_dims=(3, 4), fps=3.0, video_id="vid"):
    fc_rows = rng.standard_normal((n_frames, fc_dim))
    conv_rows = [
        tuple(rng.standard_normal(d) for d in layer_dims) for _ in range(n_frames)
    ]
    return make_video(fc_rows, fps=fps, video_id=video_id, conv_rows=conv_rows)
