"""Near-duplicate video retrieval over two-level CNN features.

The engine consumes NDVF feature containers, selects keyframes from
fully-connected-layer differences, builds MAC and fc descriptors, reduces
them with RBF kernel PCA, compares frames through a diffusion-smoothed
metric, retrieves candidates with a randomized kd-tree forest and fuses the
two feature levels by Jaccard re-ranking.
"""

from .aggregation import FrameDescriptor, Level, build_llf, build_ulf, mac_pool
from .ann_index import AnnIndex, NeighborList, brute_knn, build, knn
from .errors import NdvrError
from .evaluation import (
    GroundTruth,
    PrCurve,
    RankedResult,
    average_precision,
    mean_ap,
    precision_recall,
    synth_dataset,
)
from .feature_store import FrameFeature, VideoFeatures, read_features, write_features
from .fsuml import (
    MetricMatrix,
    SsoParams,
    VideoSignature,
    coordinate_distance_matrix,
    frame_distance,
    metric_distance,
    pairwise_frame_distances,
    ranking_frame_distances,
    similarity_matrix,
    sso_smooth,
    video_distance,
    video_ranking_distance,
)
from .keyframe import KeyframeSet, frame_differences, select_keyframes
from .kpca import KpcaModel, fit, median_sigma, transform
from .pipeline import PipelineConfig, Workspace, run_pipeline, run_stage
from .rerank import ActivationVector, FusedActivations, activation, fuse, jaccard_distance, rerank

__version__ = "0.1.0"

__all__ = [
    "ActivationVector",
    "AnnIndex",
    "FrameDescriptor",
    "FrameFeature",
    "FusedActivations",
    "GroundTruth",
    "KeyframeSet",
    "KpcaModel",
    "Level",
    "MetricMatrix",
    "NdvrError",
    "NeighborList",
    "PipelineConfig",
    "PrCurve",
    "RankedResult",
    "SsoParams",
    "VideoFeatures",
    "VideoSignature",
    "Workspace",
    "activation",
    "average_precision",
    "brute_knn",
    "build",
    "build_llf",
    "build_ulf",
    "coordinate_distance_matrix",
    "fit",
    "frame_differences",
    "frame_distance",
    "fuse",
    "jaccard_distance",
    "knn",
    "mac_pool",
    "mean_ap",
    "median_sigma",
    "metric_distance",
    "pairwise_frame_distances",
    "precision_recall",
    "ranking_frame_distances",
    "read_features",
    "rerank",
    "run_pipeline",
    "run_stage",
    "select_keyframes",
    "similarity_matrix",
    "sso_smooth",
    "synth_dataset",
    "transform",
    "video_distance",
    "video_ranking_distance",
    "write_features",
]
