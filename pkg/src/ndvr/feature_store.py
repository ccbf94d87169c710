"""NDVF binary container for per-frame two-level video features.

One file holds one video. Layout (little-endian throughout):

    magic  b"NDVF"
    version uint8 (currently 1)
    header_len uint32
    header  UTF-8 JSON: {video_id, fps, frame_count, fc_dim, layer_dims}
    frames  frame_count records, each:
        frame_index uint32
        timestamp   float64
        fc_vector   fc_dim float32
        conv_vectors layer_dims[0] float32, layer_dims[1] float32, ...

A dataset is a directory of ``.ndvf`` files plus a JSON manifest, an array
of ``{"video_id": ..., "path": ...}`` objects.

Vectors are coerced to float32 at construction so that write/read round-trips
are bit-exact. ``VideoFeatures`` values are immutable once built and safe to
share across threads.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .errors import CorruptionError, DimensionError, FormatError, ValidationError

MAGIC = b"NDVF"
VERSION = 1

_TIMESTAMP_TOL = 1e-9


def _as_float32(vec, name: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float32)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FrameFeature:
    """Raw features of one sampled frame.

    ``fc_vector`` is the fully-connected layer output; ``conv_vectors`` holds
    one per-channel-maximum vector per convolutional layer (spatial pooling is
    done by the producer, see :func:`ndvr.aggregation.mac_pool`).
    """

    frame_index: int
    timestamp: float
    fc_vector: np.ndarray
    conv_vectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError(f"frame_index must be >= 0, got {self.frame_index}")
        if not np.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValidationError(f"timestamp must be a non-negative real, got {self.timestamp}")
        object.__setattr__(self, "fc_vector", _as_float32(self.fc_vector, "fc_vector"))
        object.__setattr__(
            self,
            "conv_vectors",
            tuple(_as_float32(v, f"conv_vectors[{i}]") for i, v in enumerate(self.conv_vectors)),
        )

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return tuple(v.shape[0] for v in self.conv_vectors)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameFeature):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and self.timestamp == other.timestamp
            and np.array_equal(self.fc_vector, other.fc_vector)
            and self.layer_dims == other.layer_dims
            and all(np.array_equal(a, b) for a, b in zip(self.conv_vectors, other.conv_vectors))
        )


@dataclass(frozen=True, eq=False)
class VideoFeatures:
    """All sampled frames of one video, ordered by frame index.

    For an empty video ``fc_dim`` and ``layer_dims`` must be given explicitly
    because they cannot be inferred from frames.
    """

    video_id: str
    fps: float
    frames: tuple[FrameFeature, ...]
    fc_dim: int | None = None
    layer_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.video_id:
            raise ValidationError("video_id must be a non-empty string")
        if not np.isfinite(self.fps) or self.fps <= 0:
            raise ValidationError(f"fps must be positive, got {self.fps}")
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)

        if frames:
            fc_dim = frames[0].fc_vector.shape[0]
            layer_dims = frames[0].layer_dims
        else:
            fc_dim = self.fc_dim
            layer_dims = self.layer_dims
            if fc_dim is None or layer_dims is None:
                raise ValidationError("empty video needs explicit fc_dim and layer_dims")
        if self.fc_dim is not None and self.fc_dim != fc_dim:
            raise DimensionError(f"declared fc_dim {self.fc_dim} != frame fc_dim {fc_dim}")
        if self.layer_dims is not None and tuple(self.layer_dims) != tuple(layer_dims):
            raise DimensionError(
                f"declared layer_dims {self.layer_dims} != frame layer_dims {layer_dims}"
            )
        object.__setattr__(self, "fc_dim", int(fc_dim))
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in layer_dims))

        prev = -1
        for f in frames:
            if f.frame_index <= prev:
                raise ValidationError(
                    f"frame_index not strictly increasing at {f.frame_index} (video {self.video_id})"
                )
            prev = f.frame_index
            if f.fc_vector.shape[0] != self.fc_dim or f.layer_dims != self.layer_dims:
                raise DimensionError(
                    f"frame {f.frame_index} dims differ from the first frame (video {self.video_id})"
                )
            expected = f.frame_index / self.fps
            if abs(f.timestamp - expected) > _TIMESTAMP_TOL * max(1.0, abs(expected)):
                raise ValidationError(
                    f"frame {f.frame_index}: timestamp {f.timestamp} != frame_index/fps {expected}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VideoFeatures):
            return NotImplemented
        return (
            self.video_id == other.video_id
            and self.fps == other.fps
            and self.fc_dim == other.fc_dim
            and self.layer_dims == other.layer_dims
            and self.frames == other.frames
        )


def write_features(video: VideoFeatures, destination) -> int:
    """Serialize ``video`` as an NDVF container.

    ``destination`` may be a path or a writable binary stream. Returns the
    number of bytes written. Serialization is a pure function of the input,
    so identical videos produce identical bytes.
    """
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as sink:
            return write_features(video, sink)
    return _write_stream(video, destination)


def _write_stream(video: VideoFeatures, sink: BinaryIO) -> int:
    header = {
        "video_id": video.video_id,
        "fps": video.fps,
        "frame_count": len(video.frames),
        "fc_dim": video.fc_dim,
        "layer_dims": list(video.layer_dims),
    }
    header_bytes = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    total = 0
    total += sink.write(MAGIC)
    total += sink.write(struct.pack("<B", VERSION))
    total += sink.write(struct.pack("<I", len(header_bytes)))
    total += sink.write(header_bytes)
    for f in video.frames:
        total += sink.write(struct.pack("<Id", f.frame_index, f.timestamp))
        total += sink.write(f.fc_vector.astype("<f4", copy=False).tobytes())
        for v in f.conv_vectors:
            total += sink.write(v.astype("<f4", copy=False).tobytes())
    return total


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise CorruptionError(f"container truncated while reading {what} ({len(data)}/{n} bytes)")
    return data


def read_features(source) -> VideoFeatures:
    """Parse an NDVF container back into :class:`VideoFeatures`.

    Raises :class:`FormatError` on a bad magic or version, and
    :class:`CorruptionError` when the stream ends mid-record or carries
    trailing garbage.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as stream:
            return read_features(stream)
    return _read_stream(source)


def _read_stream(source: BinaryIO) -> VideoFeatures:
    magic = _read_exact(source, 4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<B", _read_exact(source, 1, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported NDVF version {version}")
    (header_len,) = struct.unpack("<I", _read_exact(source, 4, "header length"))
    try:
        header = json.loads(_read_exact(source, header_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"header is not valid JSON: {exc}") from exc
    try:
        video_id = header["video_id"]
        fps = float(header["fps"])
        frame_count = int(header["frame_count"])
        fc_dim = int(header["fc_dim"])
        layer_dims = tuple(int(d) for d in header["layer_dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptionError(f"header missing or malformed field: {exc}") from exc
    if frame_count < 0 or fc_dim < 1 or any(d < 1 for d in layer_dims):
        raise CorruptionError(f"header declares impossible sizes: {header}")

    floats_per_frame = fc_dim + sum(layer_dims)
    frames = []
    for i in range(frame_count):
        idx, ts = struct.unpack("<Id", _read_exact(source, 12, f"frame {i} prefix"))
        payload = _read_exact(source, 4 * floats_per_frame, f"frame {i} vectors")
        values = np.frombuffer(payload, dtype="<f4")
        fc = values[:fc_dim]
        convs = []
        offset = fc_dim
        for d in layer_dims:
            convs.append(values[offset : offset + d])
            offset += d
        frames.append(FrameFeature(idx, ts, fc, tuple(convs)))
    if source.read(1):
        raise CorruptionError("trailing bytes after the last declared frame")
    return VideoFeatures(video_id, fps, tuple(frames), fc_dim=fc_dim, layer_dims=layer_dims)


def to_bytes(video: VideoFeatures) -> bytes:
    buf = io.BytesIO()
    write_features(video, buf)
    return buf.getvalue()


def from_bytes(data: bytes) -> VideoFeatures:
    return read_features(io.BytesIO(data))


def write_manifest(entries: Iterable[tuple[str, str]], path) -> None:
    """Write a dataset manifest: a JSON array of {video_id, path} objects."""
    items = [{"video_id": vid, "path": str(p)} for vid, p in entries]
    Path(path).write_text(json.dumps(items, indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> list[tuple[str, str]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise FormatError("manifest must be a JSON array")
    out = []
    for item in raw:
        try:
            out.append((item["video_id"], item["path"]))
        except (TypeError, KeyError) as exc:
            raise FormatError(f"manifest entry malformed: {item!r}") from exc
    return out


def load_dataset(manifest_path) -> list[VideoFeatures]:
    """Read every video listed in a manifest (paths are relative to it)."""
    base = Path(manifest_path).parent
    videos = []
    for vid, rel in read_manifest(manifest_path):
        video = read_features(base / rel)
        if video.video_id != vid:
            raise ValidationError(
                f"manifest says {vid!r} but container holds {video.video_id!r}"
            )
        videos.append(video)
    return videos
