"""Dense feature grids, label maps, and the similarity/resampling primitives.

Conventions used across the package:
  - feature grids are float32, shape (H, W, C), channel-last
  - label maps are uint8, shape (H, W); 255 marks ignored pixels
  - accumulation (dots, norms, means, interpolation) runs in float64
    and is rounded back to float32 at operation boundaries
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, ZeroNormVector

IGNORE_LABEL = 255

ZERO_NORM_EPS = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FeatureGrid:
    """An (H, W, C) float32 grid of backbone features for one image."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or min(v.shape) < 1:
            raise DimensionMismatch(f"feature grid must be (H, W, C), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("feature grid contains non-finite values")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def flat(self) -> np.ndarray:
        """Row-major (H*W, C) view of the cells."""
        return self.values.reshape(-1, self.values.shape[2])


@dataclass(frozen=True)
class LabelGrid:
    """An (H, W) uint8 map of class labels; 255 is the ignore label."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or min(lab.shape) < 1:
            raise DimensionMismatch(f"label grid must be (H, W), got {lab.shape}")
        if lab.dtype != np.uint8:
            if not np.issubdtype(lab.dtype, np.integer):
                raise ValueError("labels must be integers")
            if lab.min() < 0 or lab.max() > 255:
                raise ValueError("labels must fit in uint8")
            lab = lab.astype(np.uint8)
        object.__setattr__(self, "labels", _readonly(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def present_labels(self) -> np.ndarray:
        return np.unique(self.labels)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two 1-d vectors, accumulated in float64.

    Raises DimensionMismatch on unequal lengths and ZeroNormVector when
    either norm is at or below 1e-12.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector lengths differ: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.sqrt(a @ a))
    nb = float(np.sqrt(b @ b))
    if na <= ZERO_NORM_EPS or nb <= ZERO_NORM_EPS:
        raise ZeroNormVector("cosine similarity of a (near-)zero vector")
    return float(a @ b) / (na * nb)


def pairwise_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity between every row of `a` and every row of `b`.

    a: (N, C), b: (M, C); returns float32 (N, M). Raises ZeroNormVector
    if any row norm is at or below 1e-12.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"incompatible shapes {a.shape} and {b.shape}")
    dots, na, nb = _kernels.cosine_parts(a, b)
    if (na <= ZERO_NORM_EPS).any() or (nb <= ZERO_NORM_EPS).any():
        raise ZeroNormVector("cosine similarity of a (near-)zero vector")
    return (dots / np.outer(na, nb)).astype(np.float32)


def resize_mask_nearest(mask: LabelGrid, out_h: int, out_w: int) -> LabelGrid:
    """Nearest-neighbor resize of a label map.

    Source index for output cell i is round-half-down of the
    center-aligned coordinate (i + 0.5) * in/out - 0.5, clamped to the
    valid range, so the label alphabet is preserved exactly.
    """
    if out_h < 1 or out_w < 1:
        raise DimensionMismatch("output size must be at least 1x1")
    h, w = mask.labels.shape
    rows = _nearest_indices(h, out_h)
    cols = _nearest_indices(w, out_w)
    return LabelGrid(mask.labels[np.ix_(rows, cols)])


def _nearest_indices(n_in: int, n_out: int) -> np.ndarray:
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    idx = np.ceil(pos - 0.5).astype(np.int64)  # round half down
    return np.clip(idx, 0, n_in - 1)


def upsample_bilinear(scores: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Align-corners bilinear resize of a (K, H, W) float32 score stack."""
    scores = np.asarray(scores, dtype=np.float32)
    if scores.ndim != 3 or min(scores.shape) < 1:
        raise DimensionMismatch(f"score stack must be (K, H, W), got {scores.shape}")
    if out_h < 1 or out_w < 1:
        raise DimensionMismatch("output size must be at least 1x1")
    return _kernels.bilinear_resize(scores, out_h, out_w)


def gather_class_features(grid: FeatureGrid, mask: LabelGrid, class_id: int) -> np.ndarray:
    """Feature rows at the cells labeled `class_id`, in row-major order.

    Ignored cells are never returned. Result is float32 (N, C); N may
    be zero.
    """
    if (grid.height, grid.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"grid {grid.height}x{grid.width} vs mask {mask.height}x{mask.width}"
        )
    if class_id == IGNORE_LABEL:
        return np.empty((0, grid.channels), dtype=np.float32)
    sel = np.flatnonzero(mask.labels.ravel() == class_id)
    return grid.flat()[sel].copy()
