"""Feature-space partitioning: K-means for part discovery, a SLIC-style
spatial-feature clustering for region generation on unlabeled grids, and
region mean-pooling.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, EmptyInput
from .grids import FeatureGrid

DUPLICATE_CENTROID_TOL = 1e-9


@dataclass(frozen=True)
class Partition:
    """Assignment of N items to `group_count` non-empty groups."""

    assignments: np.ndarray
    group_count: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        a.flags.writeable = False
        object.__setattr__(self, "assignments", a)
        g = int(self.group_count)
        object.__setattr__(self, "group_count", g)
        if a.ndim != 1 or a.size == 0:
            raise DimensionMismatch("assignments must be a non-empty 1-d array")
        counts = np.bincount(a, minlength=g)
        if a.min() < 0 or a.max() >= g:
            raise ValueError("group index out of range")
        if (counts == 0).any():
            raise ValueError("every group must be non-empty")

    def members(self, group: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == group)


@dataclass(frozen=True)
class RegionPool:
    """Mean-pooled region features plus their provenance.

    vectors: (R, C) float32, one row per region.
    image_indices: (R,) int64, source unlabeled-grid index per region.
    cells: tuple of int64 arrays, flat cell indices of each region.
    """

    vectors: np.ndarray
    image_indices: np.ndarray
    cells: tuple

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float32)
        idx = np.asarray(self.image_indices, dtype=np.int64)
        v.flags.writeable = False
        idx.flags.writeable = False
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "image_indices", idx)
        object.__setattr__(self, "cells", tuple(self.cells))
        if v.ndim != 2 or idx.shape != (v.shape[0],) or len(self.cells) != v.shape[0]:
            raise DimensionMismatch("region pool fields are inconsistent")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def subset(self, keep: np.ndarray) -> "RegionPool":
        keep = np.asarray(keep, dtype=np.int64)
        return RegionPool(
            self.vectors[keep],
            self.image_indices[keep],
            tuple(self.cells[i] for i in keep),
        )


def merge_pools(pools: list[RegionPool]) -> RegionPool:
    if not pools:
        raise EmptyInput("no region pools to merge")
    return RegionPool(
        np.concatenate([p.vectors for p in pools], axis=0),
        np.concatenate([p.image_indices for p in pools], axis=0),
        tuple(c for p in pools for c in p.cells),
    )


def group_means(points: np.ndarray, assignments: np.ndarray, k: int) -> np.ndarray:
    """Per-group float64 means of `points`; every group must be non-empty."""
    pts = np.asarray(points, dtype=np.float64)
    ind = (np.asarray(assignments)[None, :] == np.arange(k)[:, None]).astype(np.float64)
    counts = ind.sum(axis=1)
    return (ind @ pts) / counts[:, None]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each next centroid is drawn with probability
    proportional to its squared distance from the chosen set."""
    n = points.shape[0]
    first = int(rng.integers(n))
    cents = np.empty((k, points.shape[1]), dtype=np.float64)
    cents[0] = points[first]
    diff = points - cents[0]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 1e-24:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        cents[j] = points[idx]
        diff = points - cents[j]
        np.minimum(d2, np.einsum("ij,ij->i", diff, diff), out=d2)
    return cents


def _sse(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.einsum("ij,ij->i", diff, diff).sum())


def kmeans_partition(
    points,
    k: int,
    seed: int,
    *,
    n_init: int = 2,
    max_iter: int = 50,
    tol: float = 1e-6,
) -> Partition:
    """Deterministic K-means on row vectors.

    Lloyd's algorithm from k-means++ starts (`n_init` restarts, best
    within-cluster SSE kept, first winner on ties). The effective k is
    min(k, len(points)). Centroids that collapse within 1e-9 are merged
    and the iteration resumed, so the returned partition has no empty
    and no duplicate groups; the result is a Lloyd fixed point with
    assignment ties broken toward the lowest group index.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise EmptyInput("kmeans needs a non-empty (N, C) point array")
    n = pts.shape[0]
    k_eff = max(1, min(int(k), n))
    rng = np.random.default_rng(seed)

    best = None
    for _ in range(n_init):
        init = _kmeans_pp_init(pts, k_eff, rng)
        labels, cents = _kernels.kmeans_lloyd(pts, init, max_iter, tol)
        for _ in range(k_eff):
            labels2, cents2, merged = _merge_duplicates_and_refit(
                pts, labels, cents, max_iter, tol
            )
            labels, cents = labels2, cents2
            if not merged:
                break
        sse = _sse(pts, cents, labels)
        if best is None or sse < best[0] - 1e-12:
            best = (sse, labels, cents)
    _, labels, cents = best
    return Partition(labels, cents.shape[0])


def _merge_duplicates_and_refit(pts, labels, cents, max_iter, tol):
    k = cents.shape[0]
    remap = np.arange(k)
    kept: list[int] = []
    for j in range(k):
        target = j
        for i in kept:
            if np.linalg.norm(cents[j] - cents[i]) <= DUPLICATE_CENTROID_TOL:
                target = i
                break
        if target == j:
            kept.append(j)
        remap[j] = target
    if len(kept) == k:
        return labels, cents, False
    compact = np.full(k, -1, dtype=np.int64)
    compact[kept] = np.arange(len(kept))
    merged_cents = group_means(pts, compact[remap[labels]], len(kept))
    labels, cents = _kernels.kmeans_lloyd(pts, merged_cents, max_iter, tol)
    return labels, cents, True


def slic_feature_regions(
    grid: FeatureGrid,
    n_regions: int,
    compactness: float,
    iters: int,
) -> Partition:
    """SLIC-style clustering of a feature grid's cells.

    Cells play the role of pixels and their feature vectors the role of
    color. Centers start as the centroids of a regular block grid whose
    shape approximates `n_regions`; a cell's distance to a center is
    ||df||_2 + compactness * ||dpos||_2 / S with S = sqrt(H*W/n_regions).
    Runs `iters` assign/update rounds, then compacts away empty region
    ids. Fully deterministic.
    """
    h, w = grid.height, grid.width
    n_cells = h * w
    n_regions = max(1, min(int(n_regions), n_cells))
    gr = max(1, min(h, round(math.sqrt(n_regions * h / w))))
    gc = max(1, min(w, round(n_regions / gr)))
    k = gr * gc

    rb = (np.arange(h, dtype=np.int64) * gr) // h
    cb = (np.arange(w, dtype=np.int64) * gc) // w
    init = (rb[:, None] * gc + cb[None, :]).ravel()

    pos = _cell_positions(h, w)
    feat = np.ascontiguousarray(grid.flat(), dtype=np.float64)
    s = math.sqrt(n_cells / n_regions)
    ratio = float(compactness) / s

    labels = _kernels.slic_iterate(feat, pos, init, k, ratio, int(iters))
    used = np.unique(labels)
    compact = np.zeros(k, dtype=np.int64)
    compact[used] = np.arange(used.size)
    return Partition(compact[labels], int(used.size))


@lru_cache(maxsize=8)
def _cell_positions(h: int, w: int) -> np.ndarray:
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.ascontiguousarray(
        np.stack([rows.ravel(), cols.ravel()], axis=1), dtype=np.float64
    )


def pool_regions(grid: FeatureGrid, partition: Partition, image_index: int) -> RegionPool:
    """Mean-pool each region of `partition` over the grid's cells."""
    flat = grid.flat()
    if partition.assignments.shape[0] != flat.shape[0]:
        raise DimensionMismatch(
            f"partition covers {partition.assignments.shape[0]} cells, "
            f"grid has {flat.shape[0]}"
        )
    g = partition.group_count
    means = group_means(flat, partition.assignments, g).astype(np.float32)
    cells = tuple(partition.members(i) for i in range(g))
    return RegionPool(means, np.full(g, image_index, dtype=np.int64), cells)
