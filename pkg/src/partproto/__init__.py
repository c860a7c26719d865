"""Part-aware prototype pipeline for few-shot semantic segmentation.

Works on precomputed feature grids: builds per-class part prototypes
from labeled support by K-means, refines them with region features
pooled from unlabeled support through one round of graph attention
message passing, segments queries by cosine prototype-pixel matching,
and evaluates episodically with IoU metrics.
"""

from ._kernels import BACKEND
from .archive import (
    read_episode_archive,
    read_weights_archive,
    write_episode_archive,
    write_weights_archive,
)
from .clustering import Partition, RegionPool, kmeans_partition, pool_regions, slic_feature_regions
from .episodes import Episode, HyperParams
from .grids import (
    IGNORE_LABEL,
    FeatureGrid,
    LabelGrid,
    cosine_similarity,
    gather_class_features,
    pairwise_cosine,
    resize_mask_nearest,
    upsample_bilinear,
)
from .losses import EpisodeLoss, meta_cross_entropy_loss
from .matching import ScoreStack, fuse_and_stack, part_score_maps, predict_query_mask
from .metrics import IoUResult, binary_iou, mean_iou
from .pipeline import EpisodeResult, build_prototypes, run_episode
from .prototypes import PrototypeSet, add_class_context, initial_part_prototypes
from .refine import (
    AugmentedRegionSet,
    MessageWeights,
    propagate_region_features,
    refine_with_regions,
    select_relevant_regions,
)
from .sampling import ItemBank, load_item_bank, sample_episode
from .synthetic import SynthConfig, generate_synthetic_episode
from .training import approx_gradient_message_weights, train_message_weights

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "IGNORE_LABEL",
    "AugmentedRegionSet",
    "Episode",
    "EpisodeLoss",
    "EpisodeResult",
    "FeatureGrid",
    "HyperParams",
    "IoUResult",
    "ItemBank",
    "LabelGrid",
    "MessageWeights",
    "Partition",
    "PrototypeSet",
    "RegionPool",
    "ScoreStack",
    "SynthConfig",
    "add_class_context",
    "approx_gradient_message_weights",
    "binary_iou",
    "build_prototypes",
    "cosine_similarity",
    "fuse_and_stack",
    "gather_class_features",
    "generate_synthetic_episode",
    "initial_part_prototypes",
    "kmeans_partition",
    "load_item_bank",
    "mean_iou",
    "meta_cross_entropy_loss",
    "pairwise_cosine",
    "part_score_maps",
    "pool_regions",
    "predict_query_mask",
    "propagate_region_features",
    "read_episode_archive",
    "read_weights_archive",
    "refine_with_regions",
    "resize_mask_nearest",
    "run_episode",
    "sample_episode",
    "select_relevant_regions",
    "slic_feature_regions",
    "train_message_weights",
    "upsample_bilinear",
    "write_episode_archive",
    "write_weights_archive",
]
