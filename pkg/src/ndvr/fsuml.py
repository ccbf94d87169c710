"""Frame-specific unsupervised metric learning.

For a query frame q and a gallery frame g (both reduced by kernel PCA), a
similarity matrix over their coordinates is smoothed by a one-step diffusion:

    W(i,j) = exp(-d(i,j)^2 / (k sigma^2)),  d(i,j) = |q_i - g_j|
    P  = D^-1 W          with D(i,i) = sum_k W(i,k)
    W1 = W P
    M* = Delta^-1 W1     with Delta(i,i) = W1(i,i)

so that diag(M*) = 1, and the frame distance is the quadratic form
(q-g)^T M* (q-g), floored at zero against numerical noise.

``pairwise_frame_distances`` evaluates the same quantity for whole blocks of
frame pairs without materializing any M*, using

    (q-g)^T M* (q-g) = sum_i (delta_i / Delta_i) * [W ((W delta) / D)]_i

which needs O(n^2) work per pair instead of the O(n^3) matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .aggregation import Level
from .errors import (
    DimensionError,
    EmptySignatureError,
    ParameterError,
    SingularMatrixError,
    ValidationError,
)

_BLOCK_ROWS = 32


SIGMA_POLICIES = ("rms", "median")


@dataclass(frozen=True)
class SsoParams:
    """Diffusion parameters.

    ``sigma`` is either a fixed bandwidth or a per-pair policy: ``"rms"``
    (root mean square of the coordinate differences, the default) or
    ``"median"``. The rms policy tracks the largest coordinate scales, which
    keeps the kernel away from underflow when the reduced components span
    several orders of magnitude; the median collapses there.
    """

    k: float = 2.0
    sigma: float | str = "rms"
    t: int = 1

    def __post_init__(self):
        if not np.isfinite(self.k) or self.k <= 0:
            raise ParameterError(f"k must be positive, got {self.k}")
        if isinstance(self.sigma, str):
            if self.sigma not in SIGMA_POLICIES:
                raise ParameterError(
                    f"sigma policy must be one of {SIGMA_POLICIES}, got {self.sigma!r}"
                )
        elif not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.t != 1:
            raise ParameterError("only a single smoothing step is supported (t = 1)")


@dataclass(frozen=True)
class MetricMatrix:
    """The smoothed similarity matrix M* for one frame pair; diagonal is 1."""

    m_star: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m_star, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"M* must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("M* contains non-finite entries")
        if np.any(np.diagonal(m) != 1.0):
            raise ValidationError("M* diagonal must be exactly 1")
        object.__setattr__(self, "m_star", m)

    @property
    def dim(self) -> int:
        return self.m_star.shape[0]


@dataclass(frozen=True)
class VideoSignature:
    """Per-level matrices of reduced keyframe descriptors for one video."""

    video_id: str
    levels: Mapping[Level, np.ndarray]

    def __post_init__(self):
        fixed = {}
        for level, mat in dict(self.levels).items():
            arr = np.asarray(mat, dtype=np.float64)
            if arr.ndim != 2:
                raise DimensionError(
                    f"signature level {level} must be (keyframes, dim), got shape {arr.shape}"
                )
            arr.setflags(write=False)
            fixed[level] = arr
        object.__setattr__(self, "levels", MappingProxyType(fixed))

    def at(self, level: Level) -> np.ndarray:
        mat = self.levels.get(level)
        if mat is None or mat.shape[0] == 0:
            raise EmptySignatureError(
                f"video {self.video_id!r} has no keyframes at level {level}"
            )
        return mat


def _vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DimensionError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def coordinate_distance_matrix(q, g) -> np.ndarray:
    """out[i, j] = |q_i - g_j| over all coordinate pairs."""
    qv = _vector(q, "q")
    gv = _vector(g, "g")
    if qv.shape != gv.shape:
        raise DimensionError(f"dimension mismatch: {qv.shape} vs {gv.shape}")
    return np.abs(qv[:, None] - gv[None, :])


def _resolve_sigma(dist: np.ndarray, params: SsoParams) -> float:
    if not isinstance(params.sigma, str):
        return params.sigma
    if params.sigma == "median":
        value = float(np.median(dist))
    else:
        value = float(np.sqrt(np.mean(dist * dist)))
    # All-zero distances (both frames constant and equal) leave no scale to
    # estimate; the kernel is flat either way, so any bandwidth works.
    return value if value > 0.0 else 1.0


def similarity_matrix(dist: np.ndarray, params: SsoParams) -> np.ndarray:
    """Gaussian kernel W(i,j) = exp(-dist(i,j)^2 / (k sigma^2))."""
    d = np.asarray(dist, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise ValidationError("distance matrix contains non-finite values")
    if np.any(d < 0):
        raise ValidationError("distance matrix has negative entries")
    sigma = _resolve_sigma(d, params)
    return np.exp(-(d * d) / (params.k * sigma * sigma))


def sso_smooth(w: np.ndarray, params: SsoParams) -> MetricMatrix:
    """One diffusion step followed by diagonal self-normalization."""
    mat = np.asarray(w, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"W must be square, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValidationError("W contains non-finite values")
    row_sums = mat.sum(axis=1)
    if np.any(row_sums <= 0):
        raise SingularMatrixError("W has a non-positive row sum; cannot normalize")
    smoothing = mat / row_sums[:, None]
    smoothed = mat @ smoothing
    diag = np.diagonal(smoothed).copy()
    if np.any(diag <= 0):
        raise SingularMatrixError("smoothed similarity has a non-positive diagonal entry")
    m_star = smoothed / diag[:, None]
    np.fill_diagonal(m_star, 1.0)
    return MetricMatrix(m_star)


def metric_distance(q, g, m: MetricMatrix) -> float:
    """Quadratic form (q-g)^T M* (q-g), floored at zero.

    M* is not symmetric positive semidefinite, so the raw form can come out
    negative; such pairs count as maximally close rather than failing.
    """
    qv = _vector(q, "q")
    gv = _vector(g, "g")
    if qv.shape != gv.shape or qv.shape[0] != m.dim:
        raise DimensionError(
            f"dimension mismatch: q {qv.shape}, g {gv.shape}, M* {m.m_star.shape}"
        )
    delta = qv - gv
    return max(0.0, float(delta @ m.m_star @ delta))


def frame_distance(qd, gd, params: SsoParams = SsoParams()) -> float:
    """Distance between two reduced keyframe descriptors via the full chain."""
    dist = coordinate_distance_matrix(qd, gd)
    w = similarity_matrix(dist, params)
    m = sso_smooth(w, params)
    return metric_distance(qd, gd, m)


def pairwise_frame_distances(
    q_frames: np.ndarray, g_frames: np.ndarray, params: SsoParams = SsoParams()
) -> np.ndarray:
    """Matrix of frame distances, rows for query keyframes, columns gallery.

    Numerically equivalent to calling :func:`frame_distance` per pair but
    evaluated blockwise without building the smoothed matrices.
    """
    return _pairwise(q_frames, g_frames, params, magnitude=False)


def ranking_frame_distances(
    q_frames: np.ndarray, g_frames: np.ndarray, params: SsoParams = SsoParams()
) -> np.ndarray:
    """Frame distances for ordering candidates: |q-g|^T M* |q-g| per pair.

    The signed quadratic form of :func:`frame_distance` is indefinite and can
    turn negative on clearly dissimilar pairs, which makes it unusable as a
    ranking key. Feeding the magnitudes of the coordinate differences through
    the same smoothed matrix gives a value that is zero exactly when the
    frames coincide and strictly positive otherwise (M* entries are positive
    with a unit diagonal), so candidate ordering stays meaningful.
    """
    return _pairwise(q_frames, g_frames, params, magnitude=True)


def _pairwise(q_frames, g_frames, params: SsoParams, magnitude: bool) -> np.ndarray:
    q = np.asarray(q_frames, dtype=np.float64)
    g = np.asarray(g_frames, dtype=np.float64)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise DimensionError(f"incompatible frame stacks: {q.shape} vs {g.shape}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(g))):
        raise ValidationError("frame stacks contain non-finite values")

    out = np.empty((q.shape[0], g.shape[0]))
    for qi in range(q.shape[0]):
        row = q[qi]
        for start in range(0, g.shape[0], _BLOCK_ROWS):
            chunk = g[start : start + _BLOCK_ROWS]
            out[qi, start : start + chunk.shape[0]] = _distance_block(
                row, chunk, params, magnitude
            )
    return out


def _distance_block(
    q: np.ndarray, g_chunk: np.ndarray, params: SsoParams, magnitude: bool = False
) -> np.ndarray:
    b, n = g_chunk.shape
    dist = np.abs(q[None, :, None] - g_chunk[:, None, :])
    if not isinstance(params.sigma, str):
        sigma = np.full(b, params.sigma)
    else:
        flat = dist.reshape(b, -1)
        if params.sigma == "median":
            sigma = np.median(flat, axis=1)
        else:
            sigma = np.sqrt(np.mean(flat * flat, axis=1))
        sigma[sigma <= 0.0] = 1.0
    w = np.exp(-(dist * dist) / (params.k * sigma * sigma)[:, None, None])
    row_sums = w.sum(axis=2)
    if np.any(row_sums <= 0):
        raise SingularMatrixError("W has a non-positive row sum; cannot normalize")
    delta = q[None, :] - g_chunk
    if magnitude:
        delta = np.abs(delta)
    smoothed_delta = np.einsum("bij,bj->bi", w, np.einsum("bij,bj->bi", w, delta) / row_sums)
    diag = np.einsum("bij,bji,bj->bi", w, w, 1.0 / row_sums)
    if np.any(diag <= 0):
        raise SingularMatrixError("smoothed similarity has a non-positive diagonal entry")
    values = np.einsum("bi,bi->b", delta / diag, smoothed_delta)
    return np.maximum(values, 0.0)


def video_distance(
    q: VideoSignature, g: VideoSignature, level: Level, params: SsoParams = SsoParams()
) -> float:
    """Best-match average: mean over query keyframes of the nearest gallery keyframe."""
    q_frames = q.at(level)
    g_frames = g.at(level)
    distances = pairwise_frame_distances(q_frames, g_frames, params)
    return float(distances.min(axis=1).mean())


def video_ranking_distance(
    q: VideoSignature, g: VideoSignature, level: Level, params: SsoParams = SsoParams()
) -> float:
    """Best-match average of :func:`ranking_frame_distances`; used for ordering."""
    distances = ranking_frame_distances(q.at(level), g.at(level), params)
    return float(distances.min(axis=1).mean())
