"""Kernel PCA with an RBF kernel for descriptor reduction.

Fits on a sample of training descriptors (the landmarks), eigendecomposes the
double-centered kernel matrix and keeps the strongest components. New points
are projected through the stored landmarks and centering statistics. The
default output dimension used by the pipeline is 256.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np
import scipy.linalg
import scipy.spatial.distance

from .errors import (
    CorruptionError,
    DegenerateInputError,
    DimensionError,
    FormatError,
    ParameterError,
    RankDeficiencyError,
)

MAGIC = b"NDKP"
VERSION = 1

# Components whose eigenvalue falls below this fraction of the largest one
# carry no usable signal and are dropped.
EIGENVALUE_RTOL = 1e-10


@dataclass(frozen=True)
class KpcaModel:
    """A fitted projection: landmarks, scaled eigenvectors and centering stats.

    ``alphas`` columns are eigenvectors divided by the square root of their
    eigenvalue, so projected points reproduce the centered kernel's geometry
    and transforming is a plain kernel-vector product. Models are immutable
    and safe for concurrent :func:`transform` calls.
    """

    landmarks: np.ndarray
    sigma: float
    alphas: np.ndarray
    eigenvalues: np.ndarray
    row_means: np.ndarray
    total_mean: float

    @property
    def out_dim(self) -> int:
        return self.alphas.shape[1]

    @property
    def input_dim(self) -> int:
        return self.landmarks.shape[1]

    def training_projection(self) -> np.ndarray:
        """Projections of the landmarks themselves, row i for landmark i."""
        return self.alphas * self.eigenvalues[None, :]


def _rbf_kernel(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * sigma * sigma))


def fit(training: np.ndarray, sigma: float, out_dim: int, strict: bool = False) -> KpcaModel:
    """Fit a kernel PCA on ``training`` rows.

    When the centered kernel has fewer than ``out_dim`` usable eigenvalues the
    model shrinks to the achievable rank with a warning; ``strict=True`` turns
    that into :class:`RankDeficiencyError` instead. A spectrum with no usable
    component at all always raises.
    """
    x = np.asarray(training, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"training data must be 2-D, got shape {x.shape}")
    t = x.shape[0]
    if not (1 <= out_dim < t):
        raise ParameterError(f"need 1 <= out_dim < T, got out_dim={out_dim}, T={t}")
    if not np.isfinite(sigma) or sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")

    kernel = _rbf_kernel(x, x, sigma)
    row_means = kernel.mean(axis=0)
    total_mean = float(kernel.mean())
    centered = kernel - row_means[None, :] - row_means[:, None] + total_mean

    eigvals, eigvecs = scipy.linalg.eigh(centered)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    tol = EIGENVALUE_RTOL * max(eigvals[0], 0.0)
    achievable = int(np.sum(eigvals > tol)) if eigvals[0] > 0 else 0
    if achievable == 0:
        raise RankDeficiencyError(
            "centered kernel has no positive eigenvalue (identical training points?)",
            achievable_rank=0,
        )
    if achievable < out_dim:
        if strict:
            raise RankDeficiencyError(
                f"requested {out_dim} components but only {achievable} eigenvalues "
                f"exceed {EIGENVALUE_RTOL} of the spectral maximum",
                achievable_rank=achievable,
            )
        warnings.warn(
            f"kernel rank {achievable} < requested {out_dim} components; shrinking output",
            RuntimeWarning,
            stacklevel=2,
        )
    d = min(out_dim, achievable)

    vecs = eigvecs[:, :d].copy()
    for j in range(d):
        peak = np.argmax(np.abs(vecs[:, j]))
        if vecs[peak, j] < 0:
            vecs[:, j] = -vecs[:, j]
    vals = eigvals[:d]
    # alpha_j = v_j / sqrt(lambda_j): projected training rows then reproduce the
    # centered kernel's geometry (Y Y^T = V Lambda V^T).
    alphas = vecs / np.sqrt(vals)[None, :]

    return KpcaModel(
        landmarks=x.copy(),
        sigma=float(sigma),
        alphas=alphas,
        eigenvalues=vals.copy(),
        row_means=row_means,
        total_mean=total_mean,
    )


def transform(model: KpcaModel, x: np.ndarray) -> np.ndarray:
    """Project ``x`` (one descriptor or a stack of them) into model space."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != model.input_dim:
        raise DimensionError(
            f"expected vectors of dim {model.input_dim}, got shape {np.asarray(x).shape}"
        )
    k = _rbf_kernel(arr, model.landmarks, model.sigma)
    centered = k - k.mean(axis=1, keepdims=True) - model.row_means[None, :] + model.total_mean
    projected = centered @ model.alphas
    return projected[0] if single else projected


def median_sigma(sample: np.ndarray, max_pairs: int = 10_000, seed: int = 0) -> float:
    """Median pairwise Euclidean distance, the default RBF bandwidth.

    For large samples a seeded uniform subsample of at most ``max_pairs``
    index pairs stands in for the full set.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError(f"need a 2-D sample with at least 2 rows, got shape {x.shape}")
    t = x.shape[0]
    n_pairs = t * (t - 1) // 2
    if n_pairs <= max_pairs:
        dists = scipy.spatial.distance.pdist(x)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, t, size=2 * max_pairs)
        j = rng.integers(0, t, size=2 * max_pairs)
        keep = i != j
        i, j = i[keep][:max_pairs], j[keep][:max_pairs]
        dists = np.linalg.norm(x[i] - x[j], axis=1)
    med = float(np.median(dists))
    if med <= 0.0:
        raise DegenerateInputError("median pairwise distance is zero (identical rows?)")
    return med


def save_model(model: KpcaModel, destination) -> int:
    """Write the model as an NDKP container (float32 payload, little-endian)."""
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as sink:
            return save_model(model, sink)
    return _write_model(model, destination)


def _write_model(model: KpcaModel, sink: BinaryIO) -> int:
    t, input_dim = model.landmarks.shape
    header = {
        "T": t,
        "d": model.out_dim,
        "sigma": model.sigma,
        "input_dim": input_dim,
        "total_mean": model.total_mean,
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    total = sink.write(MAGIC)
    total += sink.write(struct.pack("<B", VERSION))
    total += sink.write(struct.pack("<I", len(blob)))
    total += sink.write(blob)
    for arr in (model.landmarks, model.alphas, model.eigenvalues, model.row_means):
        total += sink.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return total


def load_model(source) -> KpcaModel:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as stream:
            return load_model(stream)
    return _read_model(source)


def _read_model(source: BinaryIO) -> KpcaModel:
    def need(n: int, what: str) -> bytes:
        data = source.read(n)
        if len(data) != n:
            raise CorruptionError(f"model truncated while reading {what}")
        return data

    if need(4, "magic") != MAGIC:
        raise FormatError("not an NDKP model file")
    (version,) = struct.unpack("<B", need(1, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported NDKP version {version}")
    (header_len,) = struct.unpack("<I", need(4, "header length"))
    header = json.loads(need(header_len, "header").decode("utf-8"))
    t, d, input_dim = int(header["T"]), int(header["d"]), int(header["input_dim"])

    def read_array(shape: tuple[int, ...], what: str) -> np.ndarray:
        count = int(np.prod(shape))
        data = need(4 * count, what)
        return np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(shape)

    landmarks = read_array((t, input_dim), "landmarks")
    alphas = read_array((t, d), "alphas")
    eigenvalues = read_array((d,), "eigenvalues")
    row_means = read_array((t,), "row means")
    if source.read(1):
        raise CorruptionError("trailing bytes after model payload")
    return KpcaModel(
        landmarks=landmarks,
        sigma=float(header["sigma"]),
        alphas=alphas,
        eigenvalues=eigenvalues,
        row_means=row_means,
        total_mean=float(header["total_mean"]),
    )
