"""Randomly projected kd-tree forest for fast candidate retrieval.

Each tree rotates every point by its own random orthonormal matrix, then
splits on the dimension of maximum spread at the median. Queries search all
trees best-bin-first through one shared priority queue under a global
leaf-visit budget; with a budget of at least N the search is exhaustive and
matches :func:`brute_knn` exactly. Candidate distances are always computed in
the original (unrotated) space.

A built index is immutable and safe for concurrent queries;
:func:`brute_knn` is the independent correctness oracle.
"""

from __future__ import annotations

import heapq
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .errors import (
    CorruptionError,
    DimensionError,
    FormatError,
    ParameterError,
    ValidationError,
)

MAGIC = b"NDIX"
VERSION = 1

DEFAULT_NUM_TREES = 8
DEFAULT_LEAF_SIZE = 16


@dataclass(frozen=True)
class NeighborList:
    """(video_id, distance) pairs sorted by ascending distance, ties by id."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        prev = None
        for vid, dist in self.entries:
            if dist < 0 or not np.isfinite(dist):
                raise ValidationError(f"distance for {vid!r} must be finite and >= 0")
            if prev is not None and dist < prev:
                raise ValidationError("neighbor distances must be non-decreasing")
            prev = dist

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [vid for vid, _ in self.entries]

    def top(self, k: int) -> "NeighborList":
        return NeighborList(self.entries[:k])


@dataclass(frozen=True)
class _Tree:
    split_dim: np.ndarray
    split_val: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    order: np.ndarray


@dataclass(frozen=True)
class AnnIndex:
    points: np.ndarray
    ids: tuple[str, ...]
    num_trees: int
    leaf_size: int
    seed: int
    rotations: tuple[np.ndarray, ...]
    trees: tuple[_Tree, ...]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def default_budget(self, k: int) -> int:
        return 8 * k * self.num_trees


def _random_rotations(dim: int, num_trees: int, seed: int) -> list[np.ndarray]:
    """Seeded orthonormal matrices via QR of Gaussian draws, one per tree."""
    rotations = []
    for child in np.random.SeedSequence(seed).spawn(num_trees):
        rng = np.random.default_rng(child)
        gauss = rng.standard_normal((dim, dim))
        q, r = np.linalg.qr(gauss)
        q = q * np.sign(np.diagonal(r))[None, :]
        rotations.append(q)
    return rotations


def _build_tree(rotated: np.ndarray, leaf_size: int) -> _Tree:
    order = np.arange(rotated.shape[0], dtype=np.int32)
    split_dim: list[int] = []
    split_val: list[float] = []
    left: list[int] = []
    right: list[int] = []
    start: list[int] = []
    end: list[int] = []

    def new_node() -> int:
        for arr in (split_dim, left, right, start, end):
            arr.append(-1)
        split_val.append(0.0)
        return len(split_dim) - 1

    def build(lo: int, hi: int) -> int:
        node = new_node()
        if hi - lo <= leaf_size:
            start[node], end[node] = lo, hi
            return node
        segment = order[lo:hi]
        pts = rotated[segment]
        spread = pts.max(axis=0) - pts.min(axis=0)
        dim = int(np.argmax(spread))
        if spread[dim] <= 0.0:
            start[node], end[node] = lo, hi
            return node
        mid = (hi - lo) // 2
        part = np.argpartition(pts[:, dim], mid)
        order[lo:hi] = segment[part]
        split_dim[node] = dim
        split_val[node] = float(rotated[order[lo + mid], dim])
        left[node] = build(lo, lo + mid)
        right[node] = build(lo + mid, hi)
        return node

    build(0, rotated.shape[0])
    return _Tree(
        split_dim=np.asarray(split_dim, dtype=np.int32),
        split_val=np.asarray(split_val, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        start=np.asarray(start, dtype=np.int32),
        end=np.asarray(end, dtype=np.int32),
        order=order,
    )


def _check_points(points, ids) -> tuple[np.ndarray, tuple[str, ...]]:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise DimensionError(f"points must be a non-empty (N, dim) array, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("points contain non-finite values")
    id_tuple = tuple(str(v) for v in ids)
    if len(id_tuple) != pts.shape[0]:
        raise DimensionError(f"{len(id_tuple)} ids for {pts.shape[0]} points")
    if len(set(id_tuple)) != len(id_tuple):
        raise ValidationError("ids must be unique")
    return pts, id_tuple


def build(
    points,
    ids: Sequence[str],
    num_trees: int = DEFAULT_NUM_TREES,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    seed: int = 0,
) -> AnnIndex:
    """Build the forest; deterministic for a fixed seed."""
    pts, id_tuple = _check_points(points, ids)
    if num_trees < 1 or leaf_size < 1:
        raise ParameterError("num_trees and leaf_size must be positive")
    rotations = _random_rotations(pts.shape[1], num_trees, seed)
    trees = tuple(_build_tree(pts @ rot, leaf_size) for rot in rotations)
    return AnnIndex(
        points=pts,
        ids=id_tuple,
        num_trees=num_trees,
        leaf_size=leaf_size,
        seed=seed,
        rotations=tuple(rotations),
        trees=trees,
    )


def _distances_to(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    diff = points - query[None, :]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def knn(index: AnnIndex, query, k: int, budget: int | None = None) -> NeighborList:
    """Approximate k nearest neighbors under a leaf-visit budget.

    ``budget >= N`` disables the cap, which makes the search exhaustive up to
    provably safe pruning and therefore exact.
    """
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != index.dim:
        raise DimensionError(f"query dim {q.shape[0]} != index dim {index.dim}")
    if not (1 <= k <= index.size):
        raise ParameterError(f"need 1 <= k <= {index.size}, got {k}")
    if budget is None:
        budget = index.default_budget(k)
    if budget < 1:
        raise ParameterError(f"budget must be >= 1, got {budget}")
    unlimited = budget >= index.size

    rotated_q = [q @ rot for rot in index.rotations]
    frontier: list[tuple[float, int, int, int]] = []
    tiebreak = 0
    for t in range(index.num_trees):
        heapq.heappush(frontier, (0.0, tiebreak, t, 0))
        tiebreak += 1

    visited = np.zeros(index.size, dtype=bool)
    found: list[tuple[float, str]] = []
    worst: list[float] = []  # negated distances of the current best k

    def kth() -> float:
        return -worst[0] if len(worst) == k else np.inf

    leaves = 0
    while frontier and (unlimited or leaves < budget):
        bound, _, t, node = heapq.heappop(frontier)
        if bound > kth():
            continue
        tree = index.trees[t]
        qr = rotated_q[t]
        while tree.left[node] >= 0:
            dim = tree.split_dim[node]
            gap = qr[dim] - tree.split_val[node]
            if gap < 0:
                near, far = tree.left[node], tree.right[node]
            else:
                near, far = tree.right[node], tree.left[node]
            far_bound = max(bound, abs(gap))
            if far_bound <= kth():
                heapq.heappush(frontier, (far_bound, tiebreak, t, int(far)))
                tiebreak += 1
            node = int(near)
        members = tree.order[tree.start[node] : tree.end[node]]
        fresh = members[~visited[members]]
        if fresh.size:
            visited[fresh] = True
            for idx, dist in zip(fresh, _distances_to(index.points[fresh], q)):
                found.append((float(dist), index.ids[idx]))
                if len(worst) < k:
                    heapq.heappush(worst, -float(dist))
                elif dist < -worst[0]:
                    heapq.heapreplace(worst, -float(dist))
        leaves += 1

    found.sort()
    return NeighborList(tuple((vid, dist) for dist, vid in found[:k]))


def brute_knn(points, ids: Sequence[str], query, k: int) -> NeighborList:
    """Exact k nearest by exhaustive scan; ties broken by video id."""
    pts, id_tuple = _check_points(points, ids)
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != pts.shape[1]:
        raise DimensionError(f"query dim {q.shape[0]} != points dim {pts.shape[1]}")
    if not (1 <= k <= pts.shape[0]):
        raise ParameterError(f"need 1 <= k <= {pts.shape[0]}, got {k}")
    scored = sorted(zip(_distances_to(pts, q), id_tuple))
    return NeighborList(tuple((vid, float(dist)) for dist, vid in scored[:k]))


def save_index(index: AnnIndex, destination) -> int:
    """Persist as an NDIX container (float32 points, little-endian)."""
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as sink:
            return save_index(index, sink)
    return _write_index(index, destination)


def _write_index(index: AnnIndex, sink: BinaryIO) -> int:
    header = {
        "N": index.size,
        "dim": index.dim,
        "num_trees": index.num_trees,
        "leaf_size": index.leaf_size,
        "seed": index.seed,
        "ids": list(index.ids),
        "nodes": [int(t.split_dim.shape[0]) for t in index.trees],
    }
    blob = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    total = sink.write(MAGIC)
    total += sink.write(struct.pack("<B", VERSION))
    total += sink.write(struct.pack("<I", len(blob)))
    total += sink.write(blob)
    total += sink.write(np.ascontiguousarray(index.points, dtype="<f4").tobytes())
    for tree in index.trees:
        for arr, dtype in (
            (tree.split_dim, "<i4"),
            (tree.split_val, "<f8"),
            (tree.left, "<i4"),
            (tree.right, "<i4"),
            (tree.start, "<i4"),
            (tree.end, "<i4"),
            (tree.order, "<i4"),
        ):
            total += sink.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    return total


def load_index(source) -> AnnIndex:
    """Rebuild an index from an NDIX container.

    Rotations are re-derived from the stored seed; the loaded index answers
    queries over the float32-rounded points it stores.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as stream:
            return load_index(stream)
    return _read_index(source)


def _read_index(source: BinaryIO) -> AnnIndex:
    def need(n: int, what: str) -> bytes:
        data = source.read(n)
        if len(data) != n:
            raise CorruptionError(f"index truncated while reading {what}")
        return data

    if need(4, "magic") != MAGIC:
        raise FormatError("not an NDIX index file")
    (version,) = struct.unpack("<B", need(1, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported NDIX version {version}")
    (header_len,) = struct.unpack("<I", need(4, "header length"))
    header = json.loads(need(header_len, "header").decode("utf-8"))
    n, dim = int(header["N"]), int(header["dim"])
    points = (
        np.frombuffer(need(4 * n * dim, "points"), dtype="<f4")
        .astype(np.float64)
        .reshape(n, dim)
    )
    trees = []
    for node_count in header["nodes"]:
        arrays = {}
        for name, dtype, count in (
            ("split_dim", "<i4", node_count),
            ("split_val", "<f8", node_count),
            ("left", "<i4", node_count),
            ("right", "<i4", node_count),
            ("start", "<i4", node_count),
            ("end", "<i4", node_count),
            ("order", "<i4", n),
        ):
            width = 8 if dtype == "<f8" else 4
            raw = np.frombuffer(need(width * count, name), dtype=dtype)
            arrays[name] = raw.astype(np.float64 if dtype == "<f8" else np.int32)
        trees.append(_Tree(**arrays))
    if source.read(1):
        raise CorruptionError("trailing bytes after index payload")
    rotations = _random_rotations(dim, int(header["num_trees"]), int(header["seed"]))
    return AnnIndex(
        points=points,
        ids=tuple(header["ids"]),
        num_trees=int(header["num_trees"]),
        leaf_size=int(header["leaf_size"]),
        seed=int(header["seed"]),
        rotations=tuple(rotations),
        trees=tuple(trees),
    )


def index_to_bytes(index: AnnIndex) -> bytes:
    buf = io.BytesIO()
    save_index(index, buf)
    return buf.getvalue()
