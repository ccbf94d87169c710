"""Sparse contextual activation re-ranking over two feature levels.

Every video carries one k-nearest-neighborhood per level. The entrywise MIN
of the two indicator vectors is the positive set (intersection), the MAX the
negative set (union), and candidates are rescored by the averaged Jaccard
distance of the query's and the candidate's fused activations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ann_index import NeighborList
from .errors import DimensionError, MappingError, NdvrError, ParameterError, ValidationError
from .evaluation import RankedResult

DEFAULT_K = 10

FC = "fc"
CONV = "conv"
LEVELS = (FC, CONV)


class StateError(NdvrError):
    """Required precomputed neighborhoods are missing for a gallery video."""


@dataclass(frozen=True)
class ActivationVector:
    """Indicator of a video's k-neighborhood over gallery positions."""

    gallery_size: int
    nonzero: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "nonzero", frozenset(self.nonzero))
        if any(not (0 <= i < self.gallery_size) for i in self.nonzero):
            raise ValidationError("activation indices must lie in [0, gallery_size)")

    def dense(self) -> np.ndarray:
        out = np.zeros(self.gallery_size)
        out[sorted(self.nonzero)] = 1.0
        return out


@dataclass(frozen=True)
class FusedActivations:
    """Positive-set (MIN) and negative-set (MAX) activations of one video."""

    ps: ActivationVector
    ns: ActivationVector

    def __post_init__(self):
        if self.ps.gallery_size != self.ns.gallery_size:
            raise DimensionError("ps and ns must share the gallery size")
        if not self.ps.nonzero <= self.ns.nonzero:
            raise ValidationError("positive set must be contained in the negative set")


def activation(
    neighbors: NeighborList, positions: Mapping[str, int], gallery_size: int
) -> ActivationVector:
    """Indicator vector of the neighbor ids, mapped to gallery positions."""
    nonzero = set()
    for vid in neighbors.ids():
        pos = positions.get(vid)
        if pos is None:
            raise MappingError(f"neighbor id {vid!r} is not a gallery video")
        nonzero.add(pos)
    return ActivationVector(gallery_size=gallery_size, nonzero=frozenset(nonzero))


def fuse(f_fc: ActivationVector, f_conv: ActivationVector) -> FusedActivations:
    """MIN/MAX fusion of the per-level activations (set intersection/union)."""
    if f_fc.gallery_size != f_conv.gallery_size:
        raise DimensionError("activation vectors cover different gallery sizes")
    return FusedActivations(
        ps=ActivationVector(f_fc.gallery_size, f_fc.nonzero & f_conv.nonzero),
        ns=ActivationVector(f_fc.gallery_size, f_fc.nonzero | f_conv.nonzero),
    )


def _jaccard_ratio(a: frozenset[int], b: frozenset[int]) -> float:
    union = len(a | b)
    if union == 0:
        # Two empty neighborhoods are indistinguishable, hence maximally similar.
        return 1.0
    return len(a & b) / union


def jaccard_distance(q: FusedActivations, g: FusedActivations) -> float:
    """1 - mean of the PS and NS intersection-over-union ratios; in [0, 1]."""
    if q.ps.gallery_size != g.ps.gallery_size:
        raise DimensionError("activations cover different gallery sizes")
    return 1.0 - 0.5 * (
        _jaccard_ratio(q.ps.nonzero, g.ps.nonzero) + _jaccard_ratio(q.ns.nonzero, g.ns.nonzero)
    )


def _mean_distance(vid: str, pools: Mapping[str, NeighborList]) -> float:
    values = []
    for level in LEVELS:
        for entry_id, dist in pools[level].entries:
            if entry_id == vid:
                values.append(dist)
                break
    return float(np.mean(values)) if values else np.inf


def rerank(
    query_id: str,
    gallery_ids: Sequence[str],
    k: int,
    query_pools: Mapping[str, NeighborList],
    gallery_pools: Mapping[str, Mapping[str, NeighborList]],
) -> RankedResult:
    """Fuse the two per-level rankings of a query into one.

    ``query_pools`` maps level to the query's refined candidate list (top-k
    prefixes define the neighborhoods); ``gallery_pools`` holds the same,
    precomputed for every gallery video. Videos in the query's union
    neighborhood are scored by Jaccard distance (ties broken by the mean
    per-level distance, then id); remaining candidates follow ordered by that
    mean distance, then any never-seen gallery videos in id order with a null
    score.
    """
    if k < 1:
        raise ParameterError(f"neighborhood size k must be >= 1, got {k}")
    for level in LEVELS:
        if level not in query_pools:
            raise MappingError(f"query pool for level {level!r} is missing")
    positions = {vid: i for i, vid in enumerate(gallery_ids)}
    size = len(gallery_ids)

    def fused_for(pools: Mapping[str, NeighborList]) -> FusedActivations:
        return fuse(
            activation(pools[FC].top(k), positions, size),
            activation(pools[CONV].top(k), positions, size),
        )

    f_query = fused_for(query_pools)

    scored: list[tuple[float, float, str]] = []
    for pos in sorted(f_query.ns.nonzero):
        vid = gallery_ids[pos]
        pools = gallery_pools.get(vid)
        if pools is None:
            raise StateError(f"no precomputed neighborhoods for gallery video {vid!r}")
        score = jaccard_distance(f_query, fused_for(pools))
        scored.append((score, _mean_distance(vid, query_pools), vid))
    scored.sort()

    ranking: list[str] = [vid for _, _, vid in scored]
    scores: list[float | None] = [score for score, _, vid in scored]
    seen = set(ranking)
    outside = set()
    for level in LEVELS:
        for vid, _ in query_pools[level].entries:
            if vid not in seen and vid in positions:
                outside.add(vid)
    for _, vid in sorted((_mean_distance(vid, query_pools), vid) for vid in outside):
        ranking.append(vid)
        scores.append(None)
        seen.add(vid)
    for vid in sorted(positions):
        if vid not in seen:
            ranking.append(vid)
            scores.append(None)
    return RankedResult(query_id=query_id, ranking=tuple(ranking), scores=tuple(scores))
