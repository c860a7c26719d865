"""Episode-level cross-entropy on temperature-scaled cosine scores."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .grids import IGNORE_LABEL, LabelGrid
from .matching import ScoreStack


@dataclass(frozen=True)
class EpisodeLoss:
    query_ce: float
    support_ce: float

    @property
    def total(self) -> float:
        return self.query_ce + self.support_ce


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, valid: np.ndarray) -> float:
    """Mean -log softmax(logits)[label] over valid columns.

    logits: float64 (channels, cells); labels: (cells,) ints; valid:
    (cells,) bool. Returns 0.0 when nothing is valid.
    """
    if not valid.any():
        return 0.0
    lg = logits[:, valid]
    lab = labels[valid]
    m = lg.max(axis=0)
    lse = m + np.log(np.exp(lg - m).sum(axis=0))
    picked = lg[lab, np.arange(lg.shape[1])]
    return float(np.mean(lse - picked))


def meta_cross_entropy_loss(stack: ScoreStack, gt: LabelGrid, temperature: float) -> float:
    """Cross-entropy of a score stack against a feature-resolution mask.

    Scores are scaled by `temperature` before the softmax; pixels with
    the ignore label are excluded from the mean.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if (stack.height, stack.width) != (gt.height, gt.width):
        raise DimensionMismatch(
            f"stack {stack.height}x{stack.width} vs mask {gt.height}x{gt.width}"
        )
    labels = gt.labels.ravel().astype(np.int64)
    valid = labels != IGNORE_LABEL
    if (labels[valid] >= stack.n_channels).any():
        raise ValueError("mask label outside the stack's channel range")
    logits = temperature * stack.values.reshape(stack.n_channels, -1).astype(np.float64)
    return softmax_cross_entropy(logits, labels, valid)
