"""Retrieval evaluation: precision/recall curves, average precision, and a
seeded synthetic near-duplicate dataset for desk-scale benchmarks.

Average precision follows the rank convention AP = (1/m) sum_i i / r_i over
the retrieved relevant items, where r_i is the rank of the i-th of them;
relevant videos that never appear in the ranking contribute zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MappingError, ParameterError, ValidationError
from .feature_store import FrameFeature, VideoFeatures

SYNTH_FPS = 60.0
SYNTH_MAX_DROPOUT = 0.2
# Norm of the per-shot perturbation around a cluster's unit-norm center;
# small enough that cluster identity dominates any single frame.
SYNTH_SHOT_SPREAD = 0.25


@dataclass(frozen=True)
class GroundTruth:
    """Binary relevance for one query over an ordered gallery."""

    query_id: str
    relevant: frozenset[str]
    gallery: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "relevant", frozenset(self.relevant))
        object.__setattr__(self, "gallery", tuple(self.gallery))
        if len(set(self.gallery)) != len(self.gallery):
            raise ValidationError(f"gallery for {self.query_id!r} has duplicate ids")
        missing = self.relevant - set(self.gallery)
        if missing:
            raise ValidationError(
                f"relevant ids not in gallery for {self.query_id!r}: {sorted(missing)}"
            )


@dataclass(frozen=True)
class PrCurve:
    """(recall, precision) at every rank cutoff, in cutoff order."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        last_recall = -1.0
        for recall, precision in self.points:
            if recall < last_recall:
                raise ValidationError("recall must be non-decreasing along the curve")
            if not (0.0 <= precision <= 1.0) or not (0.0 <= recall <= 1.0):
                raise ValidationError("precision and recall must lie in [0, 1]")
            last_recall = recall


@dataclass(frozen=True)
class RankedResult:
    """An ordered ranking of gallery videos with distance-like scores.

    ``scores`` aligns with ``ranking``; a ``None`` score marks a video the
    ranker never reached (appended in a deterministic tail order).
    """

    query_id: str
    ranking: tuple[str, ...]
    scores: tuple[float | None, ...]

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(self.ranking))
        object.__setattr__(self, "scores", tuple(self.scores))
        if len(self.ranking) != len(self.scores):
            raise ValidationError("ranking and scores must have equal length")
        if len(set(self.ranking)) != len(self.ranking):
            raise ValidationError(f"ranking for {self.query_id!r} contains duplicates")


def _require_relevant(truth: GroundTruth) -> None:
    if not truth.relevant:
        raise ParameterError(
            f"query {truth.query_id!r} has an empty relevant set; recall is undefined"
        )


def precision_recall(result: RankedResult, truth: GroundTruth) -> PrCurve:
    """Precision and recall at every cutoff of the ranking."""
    _require_relevant(truth)
    points = []
    hits = 0
    for cutoff, vid in enumerate(result.ranking, start=1):
        if vid in truth.relevant:
            hits += 1
        points.append((hits / len(truth.relevant), hits / cutoff))
    return PrCurve(tuple(points))


def average_precision(result: RankedResult, truth: GroundTruth) -> float:
    """AP = mean over relevant items of i / r_i; unretrieved items count 0."""
    _require_relevant(truth)
    total = 0.0
    hits = 0
    for rank, vid in enumerate(result.ranking, start=1):
        if vid in truth.relevant:
            hits += 1
            total += hits / rank
    return total / len(truth.relevant)


def mean_ap(aps: Sequence[float]) -> float:
    if len(aps) == 0:
        raise ParameterError("cannot average an empty AP sequence")
    return float(sum(aps) / len(aps))


def load_ground_truth(path, label_map: Mapping[str, object]) -> list[GroundTruth]:
    """Parse a ground-truth file into per-query binary relevance.

    Format: a line ``query <query_id>`` opens a group, then one
    ``<video_id> <label>`` line per gallery video (tabs or spaces). Lines
    starting with ``#`` and blank lines are ignored. ``label_map`` sends each
    label code to ``"relevant"``/``"irrelevant"`` (or a boolean); a code
    missing from the map raises :class:`MappingError`.
    """
    groups: list[tuple[str, list[str], set[str]]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "query":
            if len(parts) != 2:
                raise ValidationError(f"line {lineno}: expected 'query <id>', got {raw!r}")
            groups.append((parts[1], [], set()))
            continue
        if not groups:
            raise ValidationError(f"line {lineno}: video line before any 'query' line")
        if len(parts) != 2:
            raise ValidationError(f"line {lineno}: expected '<video_id> <label>', got {raw!r}")
        vid, label = parts
        if label not in label_map:
            raise MappingError(f"line {lineno}: label code {label!r} missing from label map")
        flag = label_map[label]
        is_relevant = flag is True or (isinstance(flag, str) and flag.lower() == "relevant")
        if not is_relevant and not (
            flag is False or (isinstance(flag, str) and flag.lower() == "irrelevant")
        ):
            raise MappingError(f"label map value for {label!r} must be relevant/irrelevant")
        _, gallery, relevant = groups[-1]
        gallery.append(vid)
        if is_relevant:
            relevant.add(vid)
    return [
        GroundTruth(query_id=qid, relevant=frozenset(rel), gallery=tuple(gal))
        for qid, gal, rel in groups
    ]


def _shot_boundaries(rng: np.random.Generator, frames: int, shots: int) -> np.ndarray:
    cuts = rng.choice(np.arange(1, frames), size=shots - 1, replace=False)
    return np.sort(cuts)


def synth_dataset(
    num_clusters: int,
    videos_per_cluster: int,
    frames_per_video: int,
    dims: int,
    noise: float,
    seed: int,
) -> tuple[list[VideoFeatures], list[GroundTruth]]:
    """Generate a clustered near-duplicate corpus with known ground truth.

    Each cluster has a latent prototype built from a handful of constant
    "shots" around a shared cluster direction, so any frame of a member video
    stays much closer to its own cluster than to any other. Members perturb
    the prototype with per-coordinate Gaussian noise and, when ``noise > 0``,
    drop up to 20% of frames. With ``noise == 0`` members are exact copies.

    Returns the videos plus one :class:`GroundTruth` per cluster whose query
    is the cluster's first video; the query itself is excluded from its
    gallery. Deterministic for a fixed seed.
    """
    if min(num_clusters, videos_per_cluster, frames_per_video, dims) < 1:
        raise ParameterError("all synthetic dataset counts must be >= 1")
    if noise < 0 or not math.isfinite(noise):
        raise ParameterError(f"noise must be a non-negative real, got {noise}")
    rng = np.random.default_rng(seed)
    layer_dims = (max(2, dims // 2), dims)
    shots = max(2, min(frames_per_video, frames_per_video // 12 + 2))

    def unit(vec: np.ndarray) -> np.ndarray:
        return vec / np.linalg.norm(vec)

    videos: list[VideoFeatures] = []
    cluster_members: list[list[str]] = []
    for c in range(num_clusters):
        center_fc = unit(rng.standard_normal(dims))
        center_conv = [unit(rng.standard_normal(d)) for d in layer_dims]
        proto_fc = np.empty((frames_per_video, dims))
        proto_conv = [np.empty((frames_per_video, d)) for d in layer_dims]
        bounds = _shot_boundaries(rng, frames_per_video, shots) if frames_per_video > 1 else []
        segments = np.split(np.arange(frames_per_video), bounds)
        for segment in segments:
            shot_fc = unit(center_fc + SYNTH_SHOT_SPREAD * unit(rng.standard_normal(dims)))
            proto_fc[segment] = shot_fc
            for l, d in enumerate(layer_dims):
                jitter = SYNTH_SHOT_SPREAD * unit(rng.standard_normal(d))
                proto_conv[l][segment] = unit(center_conv[l] + jitter)

        members = []
        for v in range(videos_per_cluster):
            if noise > 0:
                dropout = rng.uniform(0, SYNTH_MAX_DROPOUT)
                kept = np.nonzero(rng.random(frames_per_video) >= dropout)[0]
                if kept.size == 0:
                    kept = np.array([0])
            else:
                kept = np.arange(frames_per_video)
            frames = []
            for new_idx, src in enumerate(kept):
                fc = proto_fc[src]
                convs = [proto_conv[l][src] for l in range(len(layer_dims))]
                if noise > 0:
                    fc = fc + rng.normal(0.0, noise, dims)
                    convs = [cv + rng.normal(0.0, noise, cv.shape[0]) for cv in convs]
                frames.append(
                    FrameFeature(
                        frame_index=new_idx,
                        timestamp=new_idx / SYNTH_FPS,
                        fc_vector=fc,
                        conv_vectors=tuple(convs),
                    )
                )
            vid = f"c{c:03d}_v{v:02d}"
            members.append(vid)
            videos.append(VideoFeatures(video_id=vid, fps=SYNTH_FPS, frames=tuple(frames)))
        cluster_members.append(members)

    all_ids = [v.video_id for v in videos]
    truths = []
    for members in cluster_members:
        query = members[0]
        gallery = tuple(vid for vid in all_ids if vid != query)
        truths.append(
            GroundTruth(
                query_id=query,
                relevant=frozenset(members[1:]),
                gallery=gallery,
            )
        )
    return videos, truths


def write_ground_truth(truths: Iterable[GroundTruth], path) -> None:
    """Inverse of :func:`load_ground_truth` with labels ``R``/``X``."""
    lines = []
    for truth in truths:
        lines.append(f"query {truth.query_id}")
        for vid in truth.gallery:
            lines.append(f"{vid}\t{'R' if vid in truth.relevant else 'X'}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


DEFAULT_LABEL_MAP = {"R": "relevant", "X": "irrelevant"}
