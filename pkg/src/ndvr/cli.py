"""Command line front end: one subcommand per pipeline stage.

Examples:

    ndvr --workspace ws synth --clusters 20 --videos 5 --frames 60 --dims 64 --noise 0.1 --seed 7
    ndvr --workspace ws pipeline
    ndvr --workspace ws keyframes --rate 2.5
    ndvr --workspace ws query --video c000_v00 --k 25 --levels fc,conv,fused
    ndvr --workspace ws evaluate --results ws/results/results.json --truth ws/features/truth.txt

Flag values override the config file, which overrides built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import feature_store, keyframe, pipeline
from .errors import NdvrError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ndvr", description="Near-duplicate video retrieval pipeline"
    )
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--workspace", default="workspace", help="artifact directory")
    parser.add_argument("--seed", type=int, help="global random seed")
    parser.add_argument("--threads", type=int, help="worker processes for heavy stages")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate the synthetic benchmark corpus")
    synth.add_argument("--clusters", type=int, default=20)
    synth.add_argument("--videos", type=int, default=5)
    synth.add_argument("--frames", type=int, default=60)
    synth.add_argument("--dims", type=int, default=64)
    synth.add_argument("--noise", type=float, default=0.1)
    synth.add_argument("--seed", dest="synth_seed", type=int, default=None)
    synth.add_argument("--out", default=None, help="output directory (default workspace/features)")

    ingest = sub.add_parser("ingest", help="register external .ndvf files")
    ingest.add_argument("sources", nargs="+", help=".ndvf files or directories")

    kf = sub.add_parser("keyframes", help="select keyframes for every video")
    kf.add_argument("--rate", type=float, help="target keyframes per second")
    kf.add_argument("--quiet", action="store_true",
                    help="suppress the per-video JSON lines")

    reduce_p = sub.add_parser("reduce", help="build descriptors and fit kernel PCA")
    reduce_p.add_argument("--kpca-dim", type=int)
    reduce_p.add_argument("--kpca-sigma", help="bandwidth, or 'median'")

    index = sub.add_parser("index", help="build the kd-tree forest and neighborhoods")
    index.add_argument("--num-trees", type=int)
    index.add_argument("--leaf-size", type=int)
    index.add_argument("--budget", type=int)
    index.add_argument("--sso-k", type=float)
    index.add_argument("--sso-sigma", help="'rms', 'median', or a bandwidth value")

    query = sub.add_parser("query", help="rank the gallery for queries")
    query.add_argument("--video", action="append", dest="videos",
                       help="gallery id or .ndvf path; repeatable (default: truth queries)")
    query.add_argument("--k", dest="knn_k", type=int, help="neighborhood size")
    query.add_argument("--levels", help="comma list from fc,conv,fused")
    query.add_argument("--sso-k", type=float)
    query.add_argument("--sso-sigma", help="'rms', 'median', or a bandwidth value")

    ev = sub.add_parser("evaluate", help="compute AP, mAP and PR curves")
    ev.add_argument("--results", help="results.json (default workspace/results/results.json)")
    ev.add_argument("--truth", help="ground truth file (default workspace/features/truth.txt)")
    ev.add_argument("--labels", help="JSON file mapping label codes to relevant/irrelevant")

    pipe = sub.add_parser("pipeline", help="run all stages in order")
    pipe.add_argument("--clusters", type=int, default=None,
                      help="generate a synthetic corpus first with this many clusters")
    pipe.add_argument("--videos", type=int, default=5)
    pipe.add_argument("--frames", type=int, default=60)
    pipe.add_argument("--dims", type=int, default=64)
    pipe.add_argument("--noise", type=float, default=0.1)
    pipe.add_argument("--synth-seed", type=int, default=None)

    return parser


def _kpca_sigma_value(raw):
    if raw is None or raw == "median":
        return None
    return float(raw)


def _sso_sigma_value(raw):
    if raw is None or raw in ("rms", "median"):
        return raw
    return float(raw)


def _config_from_args(args: argparse.Namespace) -> pipeline.PipelineConfig:
    overrides = {
        "seed": args.seed,
        "threads": args.threads,
        "rate": getattr(args, "rate", None),
        "kpca_dim": getattr(args, "kpca_dim", None),
        "kpca_sigma": _kpca_sigma_value(getattr(args, "kpca_sigma", None)),
        "sso_k": getattr(args, "sso_k", None),
        "sso_sigma": _sso_sigma_value(getattr(args, "sso_sigma", None)),
        "knn_k": getattr(args, "knn_k", None),
        "num_trees": getattr(args, "num_trees", None),
        "leaf_size": getattr(args, "leaf_size", None),
        "budget": getattr(args, "budget", None),
    }
    levels = getattr(args, "levels", None)
    if levels:
        overrides["levels"] = tuple(part.strip() for part in levels.split(","))
    return pipeline.load_config(args.config, overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        ws = pipeline.Workspace(args.workspace)
        report = _dispatch(args, cfg, ws)
    except NdvrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if report is not None:
        print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def _dispatch(args: argparse.Namespace, cfg: pipeline.PipelineConfig, ws: pipeline.Workspace):
    if args.command == "synth":
        return pipeline.stage_synth(
            cfg, ws,
            clusters=args.clusters, videos=args.videos, frames=args.frames,
            dims=args.dims, noise=args.noise, seed=args.synth_seed, out=args.out,
        )
    if args.command == "ingest":
        return pipeline.stage_ingest(cfg, ws, args.sources)
    if args.command == "keyframes":
        report = pipeline.stage_keyframes(cfg, ws)
        if not args.quiet:
            for video in feature_store.load_dataset(ws.root / "features" / "manifest.json"):
                ks = keyframe.select_keyframes(video, rate=cfg.rate)
                print(json.dumps({"video_id": ks.video_id, "selected": list(ks.selected)}))
        return report
    if args.command == "reduce":
        return pipeline.stage_reduce(cfg, ws)
    if args.command == "index":
        return pipeline.stage_index(cfg, ws)
    if args.command == "query":
        return pipeline.stage_query(cfg, ws, queries=args.videos)
    if args.command == "evaluate":
        label_map = None
        if args.labels:
            with open(args.labels, encoding="utf-8") as handle:
                label_map = json.load(handle)
        return pipeline.stage_evaluate(
            cfg, ws, results_path=args.results, truth_path=args.truth, label_map=label_map
        )
    if args.command == "pipeline":
        synth = None
        if args.clusters is not None:
            synth = {
                "clusters": args.clusters, "videos": args.videos, "frames": args.frames,
                "dims": args.dims, "noise": args.noise, "seed": args.synth_seed,
            }
        reports = pipeline.run_pipeline(cfg, ws, synth=synth)
        return {"stages": reports}
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
