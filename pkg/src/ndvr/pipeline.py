"""End-to-end pipeline stages over a workspace directory.

Stage order: ingest or synth -> keyframes -> reduce -> index -> query ->
evaluate. Every stage writes its artifacts under one workspace subdirectory
together with a ``_meta.json`` carrying the configuration hash, so stale
artifacts from a different configuration are rejected instead of silently
mixed. Reports with timings go to ``reports/`` and are the only
non-deterministic output; artifacts are byte-identical across reruns.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import aggregation, ann_index, evaluation, feature_store, fsuml, kpca, rerank
from .aggregation import Level
from .errors import (
    DegenerateInputError,
    ParameterError,
    StageOrderError,
    ValidationError,
)
from .keyframe import select_keyframes

LEVEL_TO_DESCRIPTOR = {rerank.FC: Level.ULF, rerank.CONV: Level.LLF}
ALL_LEVELS = (rerank.FC, rerank.CONV, "fused")

STAGES = ("synth", "ingest", "keyframes", "reduce", "index", "query", "evaluate")

_STAGE_DIRS = {
    "synth": "features",
    "ingest": "features",
    "keyframes": "keyframes",
    "reduce": "models",
    "index": "index",
    "query": "results",
    "evaluate": "results",
}


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables of the retrieval pipeline with their defaults."""

    rate: float = 2.5
    kpca_dim: int = 256
    kpca_sigma: float | None = None  # None: median pairwise-distance heuristic
    kpca_sample: int = 2000
    sso_k: float = 2.0
    sso_sigma: float | str = "rms"  # per-pair policy ("rms"/"median") or a value
    knn_k: int = 10
    num_trees: int = 8
    leaf_size: int = 16
    budget: int | None = None  # None: 8 * k * num_trees at query time
    seed: int = 0
    threads: int = 1
    levels: tuple[str, ...] = ALL_LEVELS

    def __post_init__(self):
        numeric = {
            "rate": self.rate,
            "kpca_dim": self.kpca_dim,
            "kpca_sample": self.kpca_sample,
            "sso_k": self.sso_k,
            "knn_k": self.knn_k,
            "num_trees": self.num_trees,
            "leaf_size": self.leaf_size,
            "threads": self.threads,
        }
        for name, value in numeric.items():
            if value <= 0:
                raise ParameterError(f"config field {name} must be positive, got {value}")
        for name in ("kpca_sigma", "budget"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, (int, float)) or value <= 0):
                raise ParameterError(f"config field {name} must be a positive number, got {value!r}")
        if not isinstance(self.sso_sigma, str) and (
            not isinstance(self.sso_sigma, (int, float)) or self.sso_sigma <= 0
        ):
            raise ParameterError(f"config field sso_sigma must be positive, got {self.sso_sigma!r}")
        bad = [lvl for lvl in self.levels if lvl not in ALL_LEVELS]
        if bad:
            raise ParameterError(f"unknown levels {bad}; choose from {ALL_LEVELS}")
        object.__setattr__(self, "levels", tuple(self.levels))

    def sso_params(self) -> fsuml.SsoParams:
        return fsuml.SsoParams(k=self.sso_k, sigma=self.sso_sigma)

    def pool_size(self) -> int:
        return max(4 * self.knn_k, 50)

    def hash(self) -> str:
        payload = {f.name: getattr(self, f.name) for f in fields(self)}
        payload["levels"] = list(self.levels)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def parse_config_text(text: str) -> dict[str, object]:
    """Parse flat ``key = value`` lines (comments with ``#``) into overrides."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = _coerce_config_value(key, value)
    return out


def _coerce_config_value(key: str, value: str):
    if key == "levels":
        return tuple(part.strip() for part in value.split(",") if part.strip())
    if key == "sso_sigma" and value in ("rms", "median"):
        return value
    if value in ("median", "auto", "none"):
        return None
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value.strip("\"'")


def load_config(path=None, overrides: Mapping[str, object] | None = None) -> PipelineConfig:
    values: dict[str, object] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(values) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**values)


class Workspace:
    """Directory layout helper; creates subdirectories on demand."""

    def __init__(self, root):
        self.root = Path(root)

    def dir(self, name: str) -> Path:
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def meta_path(self, dirname: str) -> Path:
        return self.root / dirname / "_meta.json"

    def write_meta(self, dirname: str, stage: str, cfg: PipelineConfig, **extra) -> None:
        meta = {"stage": stage, "config_hash": cfg.hash(), **extra}
        self.dir(dirname)
        self.meta_path(dirname).write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def require(self, dirname: str, needed_by: str, cfg: PipelineConfig) -> dict:
        path = self.meta_path(dirname)
        if not path.exists():
            producer = [s for s, d in _STAGE_DIRS.items() if d == dirname]
            raise StageOrderError(
                f"stage {needed_by!r} needs {dirname}/ artifacts; "
                f"run {' or '.join(repr(p) for p in producer)} first"
            )
        meta = json.loads(path.read_text(encoding="utf-8"))
        if meta.get("config_hash") != cfg.hash():
            raise StageOrderError(
                f"{dirname}/ artifacts were built with a different configuration "
                f"({meta.get('config_hash')} != {cfg.hash()}); rerun the pipeline"
            )
        return meta

    def write_report(self, stage: str, report: Mapping[str, object]) -> Path:
        path = self.dir("reports") / f"{stage}.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _timed(stage: str, cfg: PipelineConfig, ws: Workspace, counts: Mapping[str, object], t0: float) -> dict:
    report = {
        "stage": stage,
        "config_hash": cfg.hash(),
        "elapsed_s": round(time.perf_counter() - t0, 3),
        **counts,
    }
    ws.write_report(stage, report)
    return report


# ---------------------------------------------------------------------------
# synth / ingest


def stage_synth(
    cfg: PipelineConfig,
    ws: Workspace,
    clusters: int = 20,
    videos: int = 5,
    frames: int = 60,
    dims: int = 64,
    noise: float = 0.1,
    seed: int | None = None,
    out=None,
) -> dict:
    """Generate the synthetic corpus into ``features/`` (or ``out``)."""
    t0 = time.perf_counter()
    out_dir = Path(out) if out is not None else ws.dir("features")
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_seed = cfg.seed if seed is None else seed
    all_videos, truths = evaluation.synth_dataset(clusters, videos, frames, dims, noise, dataset_seed)
    entries = []
    for video in all_videos:
        name = f"{video.video_id}.ndvf"
        feature_store.write_features(video, out_dir / name)
        entries.append((video.video_id, name))
    feature_store.write_manifest(entries, out_dir / "manifest.json")
    evaluation.write_ground_truth(truths, out_dir / "truth.txt")
    if out is None:
        ws.write_meta("features", "synth", cfg, videos=len(all_videos), queries=len(truths))
    return _timed("synth", cfg, ws, {"videos": len(all_videos), "queries": len(truths)}, t0)


def stage_ingest(cfg: PipelineConfig, ws: Workspace, sources: Sequence) -> dict:
    """Validate external NDVF files and register them in the workspace."""
    t0 = time.perf_counter()
    paths: list[Path] = []
    for src in sources:
        p = Path(src)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.ndvf")))
        elif p.exists():
            paths.append(p)
        else:
            raise ValidationError(f"ingest source {p} does not exist")
    if not paths:
        raise ValidationError("ingest found no .ndvf files")
    out_dir = ws.dir("features")
    entries = []
    for p in paths:
        video = feature_store.read_features(p)
        name = f"{video.video_id}.ndvf"
        (out_dir / name).write_bytes(p.read_bytes())
        entries.append((video.video_id, name))
    if len(set(v for v, _ in entries)) != len(entries):
        raise ValidationError("duplicate video ids across ingested files")
    feature_store.write_manifest(entries, out_dir / "manifest.json")
    ws.write_meta("features", "ingest", cfg, videos=len(entries))
    return _timed("ingest", cfg, ws, {"videos": len(entries)}, t0)


def _load_videos(ws: Workspace) -> list[feature_store.VideoFeatures]:
    return feature_store.load_dataset(ws.root / "features" / "manifest.json")


# ---------------------------------------------------------------------------
# keyframes


def stage_keyframes(cfg: PipelineConfig, ws: Workspace) -> dict:
    t0 = time.perf_counter()
    ws.require("features", "keyframes", cfg)
    out_dir = ws.dir("keyframes")
    total = 0
    count = 0
    for video in _load_videos(ws):
        ks = select_keyframes(video, rate=cfg.rate)
        payload = {"video_id": ks.video_id, "selected": list(ks.selected)}
        (out_dir / f"{video.video_id}.json").write_text(
            json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8"
        )
        total += len(ks.selected)
        count += 1
    ws.write_meta("keyframes", "keyframes", cfg, videos=count, keyframes=total)
    return _timed("keyframes", cfg, ws, {"videos": count, "keyframes": total}, t0)


def _read_keyframes(ws: Workspace, video_id: str) -> list[int]:
    path = ws.root / "keyframes" / f"{video_id}.json"
    if not path.exists():
        raise StageOrderError(f"no keyframes for video {video_id!r}; rerun 'keyframes'")
    return json.loads(path.read_text(encoding="utf-8"))["selected"]


# ---------------------------------------------------------------------------
# reduce: descriptors + kernel PCA


def _video_descriptors(video: feature_store.VideoFeatures, selected: Iterable[int]) -> dict[Level, np.ndarray]:
    """Unit-norm keyframe descriptors per level; degenerate frames are skipped."""
    ulf, llf = [], []
    for pos in selected:
        frame = video.frames[pos]
        try:
            u = aggregation.build_ulf(frame.fc_vector)
            l = aggregation.build_llf(frame.conv_vectors)
        except DegenerateInputError:
            warnings.warn(
                f"video {video.video_id!r}: skipping degenerate keyframe {pos}",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        ulf.append(u.vector)
        llf.append(l.vector)
    if not ulf:
        raise ValidationError(f"video {video.video_id!r} has no usable keyframes")
    return {Level.ULF: np.stack(ulf), Level.LLF: np.stack(llf)}


def stage_reduce(cfg: PipelineConfig, ws: Workspace) -> dict:
    t0 = time.perf_counter()
    ws.require("features", "reduce", cfg)
    ws.require("keyframes", "reduce", cfg)
    out_dir = ws.dir("models")

    videos = _load_videos(ws)
    order = [v.video_id for v in videos]
    raw = {
        v.video_id: _video_descriptors(v, _read_keyframes(ws, v.video_id)) for v in videos
    }

    models: dict[str, kpca.KpcaModel] = {}
    arrays: dict[str, np.ndarray] = {}
    for level_key, level in LEVEL_TO_DESCRIPTOR.items():
        stacked = np.concatenate([raw[vid][level] for vid in order], axis=0)
        rng = np.random.default_rng(cfg.seed)
        if stacked.shape[0] > cfg.kpca_sample:
            pick = rng.choice(stacked.shape[0], size=cfg.kpca_sample, replace=False)
            training = stacked[np.sort(pick)]
        else:
            training = stacked
        sigma = cfg.kpca_sigma or kpca.median_sigma(training, seed=cfg.seed)
        out_dim = min(cfg.kpca_dim, training.shape[0] - 1)
        if out_dim < cfg.kpca_dim:
            warnings.warn(
                f"{level_key}: kpca_dim {cfg.kpca_dim} clamped to {out_dim} "
                f"(training sample has {training.shape[0]} rows)",
                RuntimeWarning,
                stacklevel=2,
            )
        model = kpca.fit(training, sigma=sigma, out_dim=out_dim)
        models[level_key] = model
        kpca.save_model(model, out_dir / f"{level_key}.kpca")
        for vid in order:
            arrays[f"{level_key}/{vid}"] = kpca.transform(model, raw[vid][level]).astype(
                np.float32
            )

    with open(out_dir / "signatures.npz", "wb") as sink:
        np.savez(sink, **arrays)
    ws.write_meta(
        "models",
        "reduce",
        cfg,
        videos=len(order),
        order=order,
        dims={k: m.out_dim for k, m in models.items()},
    )
    return _timed(
        "reduce", cfg, ws, {"videos": len(order), "dims": {k: m.out_dim for k, m in models.items()}}, t0
    )


def load_signatures(ws: Workspace) -> dict[str, fsuml.VideoSignature]:
    meta = json.loads(ws.meta_path("models").read_text(encoding="utf-8"))
    data = np.load(ws.root / "models" / "signatures.npz")
    out = {}
    for vid in meta["order"]:
        levels = {
            LEVEL_TO_DESCRIPTOR[key]: data[f"{key}/{vid}"].astype(np.float64)
            for key in LEVEL_TO_DESCRIPTOR
        }
        out[vid] = fsuml.VideoSignature(video_id=vid, levels=levels)
    return out


# ---------------------------------------------------------------------------
# index: kd-forest over centroids + precomputed gallery neighborhoods

_POOL_STATE: dict = {}


def _centroids(signatures: Mapping[str, fsuml.VideoSignature], order: Sequence[str], level: Level) -> np.ndarray:
    return np.stack([signatures[vid].at(level).mean(axis=0) for vid in order])


def _refined_pool(
    query_sig: fsuml.VideoSignature,
    candidates: Sequence[str],
    signatures: Mapping[str, fsuml.VideoSignature],
    level: Level,
    params: fsuml.SsoParams,
) -> list[tuple[str, float]]:
    """Order ANN candidates by the learned video distance (ties by id)."""
    scored = []
    for vid in candidates:
        if vid == query_sig.video_id:
            continue
        dist = fsuml.video_ranking_distance(query_sig, signatures[vid], level, params)
        scored.append((dist, vid))
    scored.sort()
    return [(vid, dist) for dist, vid in scored]


def _candidate_pool(
    cfg: PipelineConfig,
    index: ann_index.AnnIndex,
    query_sig: fsuml.VideoSignature,
    centroid: np.ndarray,
    signatures: Mapping[str, fsuml.VideoSignature],
    level: Level,
) -> ann_index.NeighborList:
    want = min(cfg.pool_size() + 1, index.size)
    budget = cfg.budget if cfg.budget is not None else index.default_budget(want)
    hits = ann_index.knn(index, centroid, k=want, budget=budget)
    refined = _refined_pool(query_sig, hits.ids(), signatures, level, cfg.sso_params())
    return ann_index.NeighborList(tuple(refined[: cfg.pool_size()]))


def _pool_worker(vid: str) -> tuple[str, dict[str, list]]:
    cfg = _POOL_STATE["cfg"]
    signatures = _POOL_STATE["signatures"]
    indexes = _POOL_STATE["indexes"]
    centroid_rows = _POOL_STATE["centroids"]
    out = {}
    for level_key, level in LEVEL_TO_DESCRIPTOR.items():
        pool = _candidate_pool(
            cfg, indexes[level_key], signatures[vid], centroid_rows[level_key][vid], signatures, level
        )
        out[level_key] = [[v, d] for v, d in pool.entries]
    return vid, out


def _precompute_pools(
    cfg: PipelineConfig,
    order: Sequence[str],
    signatures: Mapping[str, fsuml.VideoSignature],
    indexes: Mapping[str, ann_index.AnnIndex],
    centroid_rows: Mapping[str, Mapping[str, np.ndarray]],
) -> dict[str, dict[str, list]]:
    state = {
        "cfg": cfg,
        "signatures": signatures,
        "indexes": indexes,
        "centroids": centroid_rows,
    }
    global _POOL_STATE
    _POOL_STATE = state
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = dict(pool.map(_pool_worker, order, chunksize=4))
    else:
        results = dict(_pool_worker(vid) for vid in order)
    return {vid: results[vid] for vid in order}


def stage_index(cfg: PipelineConfig, ws: Workspace) -> dict:
    t0 = time.perf_counter()
    ws.require("models", "index", cfg)
    out_dir = ws.dir("index")
    meta = json.loads(ws.meta_path("models").read_text(encoding="utf-8"))
    order = meta["order"]
    signatures = load_signatures(ws)

    indexes = {}
    centroid_rows: dict[str, dict[str, np.ndarray]] = {}
    for offset, (level_key, level) in enumerate(LEVEL_TO_DESCRIPTOR.items()):
        pts = _centroids(signatures, order, level)
        index = ann_index.build(
            pts, order, num_trees=cfg.num_trees, leaf_size=cfg.leaf_size, seed=cfg.seed + offset
        )
        ann_index.save_index(index, out_dir / f"{level_key}.ndix")
        indexes[level_key] = index
        centroid_rows[level_key] = {vid: pts[i] for i, vid in enumerate(order)}

    pools = _precompute_pools(cfg, order, signatures, indexes, centroid_rows)
    (out_dir / "neighbors.json").write_text(
        json.dumps({"pools": pools}, sort_keys=True) + "\n", encoding="utf-8"
    )
    ws.write_meta("index", "index", cfg, videos=len(order))
    return _timed("index", cfg, ws, {"videos": len(order)}, t0)


def load_pools(ws: Workspace) -> dict[str, dict[str, ann_index.NeighborList]]:
    raw = json.loads((ws.root / "index" / "neighbors.json").read_text(encoding="utf-8"))
    out: dict[str, dict[str, ann_index.NeighborList]] = {}
    for vid, by_level in raw["pools"].items():
        out[vid] = {
            level: ann_index.NeighborList(tuple((v, float(d)) for v, d in entries))
            for level, entries in by_level.items()
        }
    return out


# ---------------------------------------------------------------------------
# query


def _external_query_pools(
    cfg: PipelineConfig,
    ws: Workspace,
    video: feature_store.VideoFeatures,
    signatures: Mapping[str, fsuml.VideoSignature],
    indexes: Mapping[str, ann_index.AnnIndex],
) -> tuple[str, dict[str, ann_index.NeighborList]]:
    """Run an out-of-gallery video through keyframes, reduction and search."""
    selected = select_keyframes(video, rate=cfg.rate).selected
    raw = _video_descriptors(video, selected)
    levels = {}
    for level_key, level in LEVEL_TO_DESCRIPTOR.items():
        model = kpca.load_model(ws.root / "models" / f"{level_key}.kpca")
        levels[level] = kpca.transform(model, raw[level])
    sig = fsuml.VideoSignature(video_id=video.video_id, levels=levels)
    pools = {}
    for level_key, level in LEVEL_TO_DESCRIPTOR.items():
        centroid = sig.at(level).mean(axis=0)
        pools[level_key] = _candidate_pool(
            cfg, indexes[level_key], sig, centroid, signatures, level
        )
    return video.video_id, pools


def _level_ranking(
    query_id: str, pool: ann_index.NeighborList, gallery: Sequence[str]
) -> evaluation.RankedResult:
    """Refined pool order, then unseen gallery videos by id with null scores."""
    ranking = [vid for vid, _ in pool.entries if vid != query_id]
    scores: list[float | None] = [dist for vid, dist in pool.entries if vid != query_id]
    seen = set(ranking)
    for vid in sorted(gallery):
        if vid not in seen and vid != query_id:
            ranking.append(vid)
            scores.append(None)
    return evaluation.RankedResult(query_id=query_id, ranking=tuple(ranking), scores=tuple(scores))


def _drop_self(result: evaluation.RankedResult, query_id: str) -> evaluation.RankedResult:
    pairs = [(v, s) for v, s in zip(result.ranking, result.scores) if v != query_id]
    return evaluation.RankedResult(
        query_id=query_id,
        ranking=tuple(v for v, _ in pairs),
        scores=tuple(s for _, s in pairs),
    )


def stage_query(
    cfg: PipelineConfig,
    ws: Workspace,
    queries: Sequence[str] | None = None,
) -> dict:
    """Rank the gallery for each query at every configured level.

    ``queries`` may hold gallery video ids or paths to external .ndvf files;
    by default the query ids of ``features/truth.txt`` are used.
    """
    t0 = time.perf_counter()
    ws.require("models", "query", cfg)
    ws.require("index", "query", cfg)
    meta = json.loads(ws.meta_path("models").read_text(encoding="utf-8"))
    order: list[str] = meta["order"]
    signatures = load_signatures(ws)
    gallery_pools = load_pools(ws)
    indexes = {
        level_key: ann_index.load_index(ws.root / "index" / f"{level_key}.ndix")
        for level_key in LEVEL_TO_DESCRIPTOR
    }

    if queries is None:
        truth_path = ws.root / "features" / "truth.txt"
        if not truth_path.exists():
            raise StageOrderError("no queries given and features/truth.txt does not exist")
        truths = evaluation.load_ground_truth(truth_path, evaluation.DEFAULT_LABEL_MAP)
        queries = [t.query_id for t in truths]
    queries = list(queries)

    results: dict[str, list[dict]] = {level: [] for level in cfg.levels}
    for query in queries:
        if query in gallery_pools:
            query_id, query_pools = query, gallery_pools[query]
        elif Path(query).exists():
            video = feature_store.read_features(query)
            query_id, query_pools = _external_query_pools(cfg, ws, video, signatures, indexes)
        else:
            raise ValidationError(f"query {query!r} is neither a gallery id nor an .ndvf path")

        per_level: dict[str, evaluation.RankedResult] = {}
        for level_key in LEVEL_TO_DESCRIPTOR:
            per_level[level_key] = _level_ranking(query_id, query_pools[level_key], order)
        if "fused" in cfg.levels:
            fused = rerank.rerank(query_id, order, cfg.knn_k, query_pools, gallery_pools)
            per_level["fused"] = _drop_self(fused, query_id)

        for level in cfg.levels:
            result = per_level[level]
            results[level].append(
                {
                    "query_id": query_id,
                    "ranking": [
                        {"video_id": vid, "score": score, "rank": rank}
                        for rank, (vid, score) in enumerate(
                            zip(result.ranking, result.scores), start=1
                        )
                    ],
                }
            )

    out_dir = ws.dir("results")
    payload = {"config_hash": cfg.hash(), "levels": results}
    (out_dir / "results.json").write_text(
        json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8"
    )
    ws.write_meta("results", "query", cfg, queries=len(queries))
    return _timed("query", cfg, ws, {"queries": len(queries)}, t0)


# ---------------------------------------------------------------------------
# evaluate


def load_results(path) -> dict[str, list[evaluation.RankedResult]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    out: dict[str, list[evaluation.RankedResult]] = {}
    for level, entries in raw["levels"].items():
        out[level] = [
            evaluation.RankedResult(
                query_id=entry["query_id"],
                ranking=tuple(item["video_id"] for item in entry["ranking"]),
                scores=tuple(item["score"] for item in entry["ranking"]),
            )
            for entry in entries
        ]
    return out


def stage_evaluate(
    cfg: PipelineConfig,
    ws: Workspace,
    results_path=None,
    truth_path=None,
    label_map: Mapping[str, object] | None = None,
) -> dict:
    t0 = time.perf_counter()
    if results_path is None:
        ws.require("results", "evaluate", cfg)
        results_path = ws.root / "results" / "results.json"
    if truth_path is None:
        truth_path = ws.root / "features" / "truth.txt"
    if not Path(truth_path).exists():
        raise StageOrderError(f"ground truth file {truth_path} does not exist")
    truths = {
        t.query_id: t
        for t in evaluation.load_ground_truth(truth_path, label_map or evaluation.DEFAULT_LABEL_MAP)
    }
    by_level = load_results(results_path)

    out_dir = ws.dir("results")
    summary: dict[str, dict] = {}
    for level, results in by_level.items():
        per_query = []
        for result in results:
            truth = truths.get(result.query_id)
            if truth is None:
                raise ValidationError(f"no ground truth for query {result.query_id!r}")
            ap = evaluation.average_precision(result, truth)
            per_query.append({"query_id": result.query_id, "ap": ap})
            curve = evaluation.precision_recall(result, truth)
            lines = ["rank,precision,recall"]
            lines += [
                f"{rank},{precision:.10g},{recall:.10g}"
                for rank, (recall, precision) in enumerate(curve.points, start=1)
            ]
            (out_dir / f"pr_{level}_{result.query_id}.csv").write_text(
                "\n".join(lines) + "\n", encoding="utf-8"
            )
        summary[level] = {
            "map": evaluation.mean_ap([q["ap"] for q in per_query]),
            "per_query": per_query,
        }
    (out_dir / "eval.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    report = _timed(
        "evaluate", cfg, ws, {"map": {level: summary[level]["map"] for level in summary}}, t0
    )
    report["levels"] = summary
    return report


# ---------------------------------------------------------------------------


def run_stage(stage: str, cfg: PipelineConfig, workspace, **kwargs) -> dict:
    """Dispatch one named stage; raises StageOrderError when inputs are missing."""
    ws = workspace if isinstance(workspace, Workspace) else Workspace(workspace)
    dispatch = {
        "synth": stage_synth,
        "ingest": stage_ingest,
        "keyframes": stage_keyframes,
        "reduce": stage_reduce,
        "index": stage_index,
        "query": stage_query,
        "evaluate": stage_evaluate,
    }
    if stage not in dispatch:
        raise ParameterError(f"unknown stage {stage!r}; choose from {STAGES}")
    return dispatch[stage](cfg, ws, **kwargs)


def run_pipeline(cfg: PipelineConfig, workspace, synth: Mapping[str, object] | None = None) -> list[dict]:
    """Run every stage in order; ``synth`` params switch on dataset generation."""
    ws = workspace if isinstance(workspace, Workspace) else Workspace(workspace)
    reports = []
    if synth is not None:
        reports.append(stage_synth(cfg, ws, **dict(synth)))
    reports.append(stage_keyframes(cfg, ws))
    reports.append(stage_reduce(cfg, ws))
    reports.append(stage_index(cfg, ws))
    reports.append(stage_query(cfg, ws))
    reports.append(stage_evaluate(cfg, ws))
    return reports
