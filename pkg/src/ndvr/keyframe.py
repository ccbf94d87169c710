"""Keyframe selection from fully-connected-layer feature differences.

A frame becomes a keyframe candidate when the feature distance to its
predecessor is among the m largest in the video, with m set by a target
rate of keyframes per second (2.5 by default). Candidates falling into the
same integral second are then deduplicated, keeping the one after the
strongest change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyVideoError, ParameterError
from .feature_store import VideoFeatures

DEFAULT_RATE = 2.5

# Frame 0 is always a candidate but never wins a same-second duel or a
# truncation slot against a frame with a real difference value.
_SENTINEL = -math.inf


@dataclass(frozen=True)
class KeyframeSet:
    video_id: str
    selected: tuple[int, ...]
    difference_sequence: tuple[float, ...]


def frame_differences(video: VideoFeatures) -> np.ndarray:
    """Euclidean distances between consecutive fc vectors, length n-1."""
    if len(video.frames) == 0:
        raise EmptyVideoError(f"video {video.video_id!r} has no frames")
    if len(video.frames) == 1:
        return np.zeros(0)
    fc = np.stack([f.fc_vector for f in video.frames]).astype(np.float64)
    return np.linalg.norm(np.diff(fc, axis=0), axis=1)


def _difference_of(position: int, diffs: np.ndarray) -> float:
    return _SENTINEL if position == 0 else float(diffs[position - 1])


def _candidates(diffs: np.ndarray, rate: float, duration: float) -> list[int]:
    """Candidate frame positions before deduplication (frame 0 always in)."""
    n = len(diffs) + 1
    if n == 1:
        return [0]
    m = max(1, min(math.ceil(rate * duration), n - 1))
    threshold = np.sort(diffs)[::-1][m - 1]
    picked = {0}
    picked.update(int(i) + 1 for i in np.nonzero(diffs >= threshold)[0])
    return sorted(picked)


def select_keyframes(video: VideoFeatures, rate: float = DEFAULT_RATE) -> KeyframeSet:
    """Select keyframes for one video.

    The threshold is the m-th largest adjacent-frame difference with
    m = ceil(rate * duration); a difference D[i] marks frame i+1. Among
    candidates sharing the same integral second only the one with the
    largest difference survives (ties to the smaller index). The result
    is capped at ceil(rate * duration) frames, dropping the weakest.
    """
    if rate <= 0 or not math.isfinite(rate):
        raise ParameterError(f"rate must be positive, got {rate}")
    diffs = frame_differences(video)
    n = len(video.frames)
    duration = n / video.fps
    cap = max(1, min(math.ceil(rate * duration), n))

    buckets: dict[int, int] = {}
    for pos in _candidates(diffs, rate, duration):
        second = int(video.frames[pos].timestamp)
        best = buckets.get(second)
        if best is None or _difference_of(pos, diffs) > _difference_of(best, diffs):
            buckets[second] = pos

    selected = sorted(buckets.values())
    if len(selected) > cap:
        ranked = sorted(selected, key=lambda p: (-_difference_of(p, diffs), p))
        selected = sorted(ranked[:cap])

    return KeyframeSet(
        video_id=video.video_id,
        selected=tuple(selected),
        difference_sequence=tuple(float(d) for d in diffs),
    )
