"""Two-level frame descriptors: MAC-aggregated conv features and fc features.

The low level (LLF) concatenates per-layer channel maxima, removes the
vector's own mean and L2-normalizes. The upper level (ULF) is the
L2-normalized fully-connected layer output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DimensionError, ValidationError

UNIT_NORM_TOL = 1e-6


class Level(enum.Enum):
    ULF = "ulf"
    LLF = "llf"


@dataclass(frozen=True)
class FrameDescriptor:
    """A unit-norm descriptor for one keyframe at one feature level."""

    level: Level
    vector: np.ndarray

    def __post_init__(self):
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"descriptor norm {norm} is not 1 within {UNIT_NORM_TOL}")


def mac_pool(feature_map: np.ndarray) -> np.ndarray:
    """Maximum activation per channel of an (h, w, c) conv feature map."""
    fmap = np.asarray(feature_map)
    if fmap.ndim != 3 or min(fmap.shape) < 1:
        raise DimensionError(f"expected a non-empty 3-D feature map, got shape {fmap.shape}")
    if not np.all(np.isfinite(fmap)):
        raise ValidationError("feature map contains non-finite values")
    return fmap.max(axis=(0, 1))


def _normalized(vec: np.ndarray, level: Level) -> FrameDescriptor:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise DegenerateInputError(f"{level.value} descriptor is a zero vector")
    return FrameDescriptor(level, vec / norm)


def build_llf(conv_vectors: Sequence[np.ndarray]) -> FrameDescriptor:
    """Concatenate per-layer channel maxima, center, and L2-normalize.

    Raises :class:`DegenerateInputError` when the concatenation is constant,
    because centering then leaves nothing to normalize. Callers may skip
    such frames.
    """
    if len(conv_vectors) == 0:
        raise DimensionError("need at least one conv layer vector")
    concat = np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in conv_vectors])
    if concat.size == 0:
        raise DimensionError("conv layer vectors are all empty")
    if not np.all(np.isfinite(concat)):
        raise ValidationError("conv vectors contain non-finite values")
    return _normalized(concat - concat.mean(), Level.LLF)


def build_ulf(fc_vector: np.ndarray) -> FrameDescriptor:
    """L2-normalized copy of the fully-connected layer vector."""
    vec = np.asarray(fc_vector, dtype=np.float64).ravel()
    if vec.size == 0:
        raise DimensionError("fc vector is empty")
    if not np.all(np.isfinite(vec)):
        raise ValidationError("fc vector contains non-finite values")
    return _normalized(vec, Level.ULF)
