"""End-to-end episode processing.

Per episode: build part prototypes for background and every class from
the labeled support, optionally refine them with pooled regions from
the unlabeled support, score every query and support grid against the
refined prototypes, and produce predictions plus the episode loss.
"""

import math
from dataclasses import dataclass

import numpy as np

from .clustering import RegionPool, merge_pools, pool_regions, slic_feature_regions
from .episodes import Episode, HyperParams
from .errors import EmptyClassFeatures
from .grids import FeatureGrid, LabelGrid, gather_class_features, resize_mask_nearest
from .losses import EpisodeLoss, meta_cross_entropy_loss
from .matching import ScoreStack, fuse_and_stack, part_score_maps, predict_query_mask
from .prototypes import PrototypeSet, add_class_context, initial_part_prototypes
from .refine import (
    MessageWeights,
    propagate_region_features,
    refine_with_regions,
    select_relevant_regions,
)


@dataclass(frozen=True)
class EpisodeResult:
    refined: tuple[PrototypeSet, ...]  # channel order: background, then classes
    query_stacks: tuple[ScoreStack, ...]
    support_stacks: tuple[ScoreStack, ...]
    predictions: tuple[LabelGrid, ...]  # at episode image size
    loss: EpisodeLoss


def channel_seed(seed: int, channel: int) -> int:
    return int(np.random.SeedSequence((seed, channel)).generate_state(1)[0])


def build_region_pool(episode: Episode, hp: HyperParams) -> RegionPool:
    """Pool SLIC regions from all unlabeled grids, splitting the region
    budget evenly across grids. Empty pool when there are none."""
    n_u = episode.n_unlabeled
    if n_u == 0:
        return RegionPool(
            np.empty((0, episode.channels), dtype=np.float32),
            np.empty(0, dtype=np.int64),
            (),
        )
    per_grid = math.ceil(hp.n_regions / n_u)
    pools = []
    for i, grid in enumerate(episode.support_unlabeled):
        part = slic_feature_regions(grid, per_grid, hp.slic_compactness, hp.slic_iters)
        pools.append(pool_regions(grid, part, i))
    return merge_pools(pools)


def build_prototypes(
    episode: Episode, hp: HyperParams, weights: MessageWeights, seed: int = 0
) -> tuple[PrototypeSet, ...]:
    """Refined prototype sets for channels 0 (background) through C."""
    if hp.nonparametric_gnn and not weights.nonparametric:
        weights = MessageWeights(weights.matrix, nonparametric=True)
    contextual = build_contextual_prototypes(episode, hp, seed)
    pool = build_region_pool(episode, hp)
    refined = []
    for protos in contextual:
        selected = select_relevant_regions(pool, protos, hp.sigma)
        augmented = propagate_region_features(selected, weights)
        refined.append(refine_with_regions(protos, augmented, hp.lambda_r))
    return tuple(refined)


def build_contextual_prototypes(
    episode: Episode, hp: HyperParams, seed: int = 0
) -> tuple[PrototypeSet, ...]:
    flat_pairs = [pair for shots in episode.support_labeled for pair in shots]
    down = [
        (grid, resize_mask_nearest(mask, grid.height, grid.width))
        for grid, mask in flat_pairs
    ]
    out = []
    for channel in range(episode.n_way + 1):
        feats = np.concatenate(
            [gather_class_features(grid, mask, channel) for grid, mask in down],
            axis=0,
        )
        if feats.shape[0] == 0:
            raise EmptyClassFeatures(
                f"channel {channel} has no cells at feature resolution"
            )
        initial = initial_part_prototypes(
            feats,
            hp.n_parts,
            channel_seed(seed, channel),
            class_id=channel,
            kmeans_max_iter=hp.kmeans_max_iter,
            kmeans_tol=hp.kmeans_tol,
        )
        out.append(add_class_context(initial, hp.lambda_p))
    return tuple(out)


def stack_for_grid(grid: FeatureGrid, refined: tuple[PrototypeSet, ...]) -> ScoreStack:
    return fuse_and_stack([part_score_maps(grid, protos) for protos in refined])


def run_episode(
    episode: Episode,
    hp: HyperParams,
    weights: MessageWeights,
    seed: int = 0,
) -> EpisodeResult:
    """Full forward pass over one episode."""
    refined = build_prototypes(episode, hp, weights, seed)

    query_stacks = []
    predictions = []
    query_losses = []
    for grid, gt in episode.queries:
        stack = stack_for_grid(grid, refined)
        query_stacks.append(stack)
        predictions.append(
            predict_query_mask(stack, *episode.image_size, episode.class_list)
        )
        gt_feat = resize_mask_nearest(gt, grid.height, grid.width)
        query_losses.append(
            meta_cross_entropy_loss(stack, gt_feat, hp.score_temperature)
        )

    support_stacks = []
    support_losses = []
    for shots in episode.support_labeled:
        for grid, mask in shots:
            stack = stack_for_grid(grid, refined)
            support_stacks.append(stack)
            mask_feat = resize_mask_nearest(mask, grid.height, grid.width)
            support_losses.append(
                meta_cross_entropy_loss(stack, mask_feat, hp.score_temperature)
            )

    loss = EpisodeLoss(
        query_ce=float(np.mean(query_losses)),
        support_ce=float(np.mean(support_losses)),
    )
    return EpisodeResult(
        refined=refined,
        query_stacks=tuple(query_stacks),
        support_stacks=tuple(support_stacks),
        predictions=tuple(predictions),
        loss=loss,
    )
