"""Prototype refinement from unlabeled regions.

Three steps per class: keep the pooled regions that look like any of
the class's prototypes, run one round of similarity-weighted message
passing over the kept regions (optionally through a learned linear map),
then pull each prototype toward the attention-weighted region mixture.
"""

from dataclasses import dataclass

import numpy as np

from .clustering import RegionPool
from .errors import DimensionMismatch
from .grids import pairwise_cosine
from .prototypes import (
    ATTENTION_EPS,
    STAGE_CONTEXTUAL,
    STAGE_REFINED,
    PrototypeSet,
    require_stage,
)


@dataclass(frozen=True)
class MessageWeights:
    """Linear message map for region propagation.

    `matrix` is (C, C) float32. With `nonparametric` set the matrix is
    ignored and messages carry the raw neighbor features.
    """

    matrix: np.ndarray
    nonparametric: bool = False

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float32)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"weight matrix must be square, got {m.shape}")
        if not np.isfinite(m).all():
            raise ValueError("weight matrix must be finite")

    @property
    def channels(self) -> int:
        return self.matrix.shape[0]

    @staticmethod
    def initial(channels: int, nonparametric: bool = False) -> "MessageWeights":
        """Untrained default: identity damped to 0.1."""
        return MessageWeights(
            0.1 * np.eye(channels, dtype=np.float32), nonparametric
        )

    def replace_matrix(self, matrix: np.ndarray) -> "MessageWeights":
        return MessageWeights(matrix, self.nonparametric)


@dataclass(frozen=True)
class AugmentedRegionSet:
    """Region vectors after message passing, parallel to the source pool."""

    vectors: np.ndarray
    pool: RegionPool

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)
        if v.shape[0] != len(self.pool):
            raise DimensionMismatch("augmented set must match its pool")

    def __len__(self) -> int:
        return self.vectors.shape[0]


def select_relevant_regions(
    pool: RegionPool, protos: PrototypeSet, sigma: float
) -> RegionPool:
    """Keep regions whose cosine to some prototype strictly exceeds sigma."""
    require_stage(protos, STAGE_CONTEXTUAL)
    if len(pool) == 0:
        return pool
    sims = pairwise_cosine(protos.vectors, pool.vectors)
    keep = np.flatnonzero(sims.max(axis=0) > sigma)
    return pool.subset(keep)


def neighbor_mix(vectors: np.ndarray) -> np.ndarray:
    """Normalized clamped-cosine neighbor averages u_i for message passing.

    u_i = sum_{j != i} d_ij v_j / Z_i with d_ij = max(cos(v_i, v_j), 0)
    and Z_i = sum_{j != i} d_ij + 1e-8. Returns float64 (N, C); the
    single-region case yields the zero vector.
    """
    n = vectors.shape[0]
    v = np.asarray(vectors, dtype=np.float64)
    if n == 1:
        return np.zeros_like(v)
    d = pairwise_cosine(vectors, vectors).astype(np.float64)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    z = d.sum(axis=1) + ATTENTION_EPS
    return (d @ v) / z[:, None]


def propagate_region_features(
    selected: RegionPool, weights: MessageWeights
) -> AugmentedRegionSet:
    """One round of message passing over the selected regions.

    Each region receives the ReLU of its neighbor mix, mapped through
    the weight matrix unless the weights are nonparametric.
    """
    v = selected.vectors
    if len(selected) == 0:
        return AugmentedRegionSet(v.copy(), selected)
    if not weights.nonparametric and v.shape[1] != weights.channels:
        raise DimensionMismatch(
            f"regions have {v.shape[1]} channels, weights expect {weights.channels}"
        )
    mix = neighbor_mix(v)
    if weights.nonparametric:
        msg = mix
    else:
        msg = mix @ weights.matrix.astype(np.float64).T
    out = v.astype(np.float64) + np.maximum(msg, 0.0)
    return AugmentedRegionSet(out.astype(np.float32), selected)


def region_attention_weights(
    proto_vectors: np.ndarray, region_vectors: np.ndarray
) -> np.ndarray:
    """Attention of each prototype over the augmented regions.

    phi[i, j] = max(cos(p_i, r_j), 0) / (row sum + 1e-8); a row with no
    positive similarity falls back to uniform weights.
    """
    sims = pairwise_cosine(proto_vectors, region_vectors).astype(np.float64)
    np.maximum(sims, 0.0, out=sims)
    rowsum = sims.sum(axis=1)
    phi = sims / (rowsum[:, None] + ATTENTION_EPS)
    dead = rowsum == 0.0
    if dead.any():
        phi[dead] = 1.0 / region_vectors.shape[0]
    return phi


def refine_with_regions(
    protos: PrototypeSet, augmented: AugmentedRegionSet, lambda_r: float
) -> PrototypeSet:
    """Pull each prototype toward its attention-weighted region mixture.

    With no regions or lambda_r == 0 the vectors pass through bit-exact
    and only the stage advances.
    """
    require_stage(protos, STAGE_CONTEXTUAL)
    v = protos.vectors
    if len(augmented) == 0 or lambda_r == 0.0:
        return PrototypeSet(protos.class_id, v.copy(), STAGE_REFINED)
    phi = region_attention_weights(v, augmented.vectors)
    pulled = v.astype(np.float64) + lambda_r * (
        phi @ augmented.vectors.astype(np.float64)
    )
    return PrototypeSet(protos.class_id, pulled.astype(np.float32), STAGE_REFINED)
