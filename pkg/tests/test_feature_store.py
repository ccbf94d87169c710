import json
import struct

import numpy as np
import pytest

from ndvr.errors import CorruptionError, DimensionError, FormatError, ValidationError
from ndvr.feature_store import (
    FrameFeature,
    VideoFeatures,
    from_bytes,
    load_dataset,
    read_features,
    read_manifest,
    to_bytes,
    write_features,
    write_manifest,
)

from conftest import FIXTURES, random_video


def test_round_trip_empty_video():
    video = VideoFeatures("empty", fps=10.0, frames=(), fc_dim=8, layer_dims=(4, 6))
    data = to_bytes(video)
    back = from_bytes(data)
    assert back == video
    assert back.frames == ()
    assert back.fc_dim == 8 and back.layer_dims == (4, 6)


def test_round_trip_three_frames_bit_exact(rng):
    video = random_video(rng, 3, fc_dim=8, layer_dims=(4, 6))
    back = from_bytes(to_bytes(video))
    assert back == video
    for a, b in zip(back.frames, video.frames):
        assert a.fc_vector.tobytes() == b.fc_vector.tobytes()
        for x, y in zip(a.conv_vectors, b.conv_vectors):
            assert x.tobytes() == y.tobytes()


def test_golden_fixture_reserializes_byte_identical():
    raw = (FIXTURES / "tiny.ndvf").read_bytes()
    video = from_bytes(raw)
    assert len(video.frames) == 5
    assert to_bytes(video) == raw


def test_write_is_deterministic(rng):
    video = random_video(rng, 4)
    assert to_bytes(video) == to_bytes(video)


def test_round_trip_random_shapes(rng):
    for _ in range(25):
        n = int(rng.integers(0, 6))
        fc_dim = int(rng.integers(1, 9))
        layers = tuple(int(d) for d in rng.integers(1, 7, size=rng.integers(1, 4)))
        if n == 0:
            video = VideoFeatures("v", fps=5.0, frames=(), fc_dim=fc_dim, layer_dims=layers)
        else:
            video = random_video(rng, n, fc_dim=fc_dim, layer_dims=layers)
        assert from_bytes(to_bytes(video)) == video


def test_bad_magic_raises_format_error():
    with pytest.raises(FormatError):
        from_bytes(b"XXXX" + b"\x01" + b"\x00" * 20)


def test_bad_version_raises_format_error(rng):
    data = bytearray(to_bytes(random_video(rng, 1)))
    data[4] = 99
    with pytest.raises(FormatError):
        from_bytes(bytes(data))


def test_truncation_mid_frame_raises_corruption(rng):
    data = to_bytes(random_video(rng, 3))
    with pytest.raises(CorruptionError):
        from_bytes(data[: len(data) - 7])


def test_trailing_bytes_raise_corruption(rng):
    data = to_bytes(random_video(rng, 2))
    with pytest.raises(CorruptionError):
        from_bytes(data + b"\x00")


def test_header_garbage_raises_corruption():
    blob = b"NDVF" + struct.pack("<B", 1) + struct.pack("<I", 4) + b"nope"
    with pytest.raises(CorruptionError):
        from_bytes(blob)


def test_non_finite_payload_rejected_on_read(rng):
    video = random_video(rng, 1, fc_dim=2, layer_dims=(2,))
    data = bytearray(to_bytes(video))
    # first fc float starts right after the 12-byte frame prefix
    header_len = struct.unpack("<I", bytes(data[5:9]))[0]
    offset = 9 + header_len + 12
    data[offset : offset + 4] = struct.pack("<f", float("nan"))
    with pytest.raises(ValidationError):
        from_bytes(bytes(data))


def test_frame_invariants_enforced():
    f0 = FrameFeature(0, 0.0, np.ones(3), (np.ones(2),))
    f_bad_ts = FrameFeature(1, 0.9, np.ones(3), (np.ones(2),))
    with pytest.raises(ValidationError):
        VideoFeatures("v", fps=1.0, frames=(f0, f_bad_ts))
    f_dup = FrameFeature(0, 0.0, np.ones(3), (np.ones(2),))
    with pytest.raises(ValidationError):
        VideoFeatures("v", fps=1.0, frames=(f0, f_dup))
    f_other_dim = FrameFeature(1, 1.0, np.ones(4), (np.ones(2),))
    with pytest.raises(DimensionError):
        VideoFeatures("v", fps=1.0, frames=(f0, f_other_dim))


def test_frame_rejects_non_finite_and_negative_index():
    with pytest.raises(ValidationError):
        FrameFeature(0, 0.0, np.array([1.0, np.inf]), ())
    with pytest.raises(ValidationError):
        FrameFeature(-1, 0.0, np.ones(2), ())


def test_empty_video_needs_declared_dims():
    with pytest.raises(ValidationError):
        VideoFeatures("v", fps=1.0, frames=())


def test_write_to_path_and_read_back(tmp_path, rng):
    video = random_video(rng, 2)
    path = tmp_path / "a.ndvf"
    n = write_features(video, path)
    assert n == path.stat().st_size
    assert read_features(path) == video


def test_manifest_round_trip_and_dataset(tmp_path, rng):
    videos = [random_video(rng, 2, video_id=f"v{i}") for i in range(3)]
    entries = []
    for v in videos:
        write_features(v, tmp_path / f"{v.video_id}.ndvf")
        entries.append((v.video_id, f"{v.video_id}.ndvf"))
    write_manifest(entries, tmp_path / "manifest.json")
    assert read_manifest(tmp_path / "manifest.json") == entries
    assert load_dataset(tmp_path / "manifest.json") == videos


def test_dataset_id_mismatch(tmp_path, rng):
    video = random_video(rng, 1, video_id="real")
    write_features(video, tmp_path / "x.ndvf")
    write_manifest([("other", "x.ndvf")], tmp_path / "manifest.json")
    with pytest.raises(ValidationError):
        load_dataset(tmp_path / "manifest.json")


def test_manifest_malformed(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"not": "a list"}))
    with pytest.raises(FormatError):
        read_manifest(tmp_path / "m.json")
