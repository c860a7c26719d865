"""Part prototype generation from labeled support features.

A class is summarized by up to `n_parts` prototypes: K-means group
means over the class's feature cells, each then augmented with a
similarity-weighted mixture of the other prototypes of the same class
(the class context). Prototype sets carry a stage tag so downstream
steps can refuse out-of-order input.
"""

from dataclasses import dataclass

import numpy as np

from .clustering import group_means, kmeans_partition
from .errors import EmptyClassFeatures, StageMismatch
from .grids import pairwise_cosine

STAGE_INITIAL = "initial"
STAGE_CONTEXTUAL = "contextual"
STAGE_REFINED = "refined"

ATTENTION_EPS = 1e-8


@dataclass(frozen=True)
class PrototypeSet:
    """Per-class part prototypes; `vectors` is (N_p, C) float32."""

    class_id: int
    vectors: np.ndarray
    stage: str

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError("prototype set needs at least one (N_p, C) row")
        if not np.isfinite(v).all():
            raise ValueError("prototypes must be finite")
        if self.stage not in (STAGE_INITIAL, STAGE_CONTEXTUAL, STAGE_REFINED):
            raise ValueError(f"unknown stage {self.stage!r}")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def channels(self) -> int:
        return self.vectors.shape[1]


def require_stage(protos: PrototypeSet, stage: str) -> None:
    if protos.stage != stage:
        raise StageMismatch(f"expected stage {stage!r}, got {protos.stage!r}")


def initial_part_prototypes(
    class_features: np.ndarray,
    n_parts: int,
    seed: int,
    *,
    class_id: int = 0,
    kmeans_max_iter: int = 50,
    kmeans_tol: float = 1e-6,
) -> PrototypeSet:
    """Cluster a class's feature cells and return the group means.

    The effective part count is min(n_parts, number of features); the
    prototypes are ordered by cluster index.
    """
    feats = np.asarray(class_features, dtype=np.float32)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise EmptyClassFeatures(f"class {class_id} has no feature cells")
    part = kmeans_partition(
        feats, n_parts, seed, max_iter=kmeans_max_iter, tol=kmeans_tol
    )
    means = group_means(feats, part.assignments, part.group_count)
    return PrototypeSet(class_id, means.astype(np.float32), STAGE_INITIAL)


def context_attention_weights(vectors: np.ndarray) -> np.ndarray:
    """Row-normalized similarity weights between prototypes of one class.

    Entry (i, j) with j != i is cosine(v_i, v_j) clamped at zero and
    divided by the row's clamped sum plus 1e-8; a row whose clamped
    similarities are all zero falls back to uniform weights over the
    other prototypes. The diagonal is zero. For a single prototype the
    matrix is the 1x1 zero matrix.
    """
    n = vectors.shape[0]
    if n == 1:
        return np.zeros((1, 1), dtype=np.float64)
    sims = pairwise_cosine(vectors, vectors).astype(np.float64)
    np.maximum(sims, 0.0, out=sims)
    np.fill_diagonal(sims, 0.0)
    rowsum = sims.sum(axis=1)
    weights = sims / (rowsum[:, None] + ATTENTION_EPS)
    dead = rowsum == 0.0
    if dead.any():
        uniform = np.full(n, 1.0 / (n - 1))
        for i in np.flatnonzero(dead):
            weights[i] = uniform
            weights[i, i] = 0.0
    return weights


def add_class_context(protos: PrototypeSet, lambda_p: float) -> PrototypeSet:
    """Mix each prototype with the attention-weighted others of its class."""
    require_stage(protos, STAGE_INITIAL)
    v = protos.vectors
    if len(protos) == 1 or lambda_p == 0.0:
        return PrototypeSet(protos.class_id, v.copy(), STAGE_CONTEXTUAL)
    mu = context_attention_weights(v)
    mixed = v.astype(np.float64) + lambda_p * (mu @ v.astype(np.float64))
    return PrototypeSet(protos.class_id, mixed.astype(np.float32), STAGE_CONTEXTUAL)
