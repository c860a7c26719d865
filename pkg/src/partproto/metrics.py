"""Intersection-over-union metrics.

Pixels whose label is 255 in either mask are excluded. A class absent
from both masks scores IoU 1 (the 0/0 case counts as agreement), which
matters when averaging over episodes where a class never appears.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .grids import IGNORE_LABEL, LabelGrid


@dataclass(frozen=True)
class IoUResult:
    per_class: dict  # global class id -> IoU
    mean: float      # mean over the episode's foreground classes


def _check_sizes(pred: LabelGrid, gt: LabelGrid) -> None:
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise DimensionMismatch(
            f"pred {pred.height}x{pred.width} vs gt {gt.height}x{gt.width}"
        )


def _iou(p: np.ndarray, g: np.ndarray) -> float:
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(p & g)) / union


def mean_iou(pred: LabelGrid, gt: LabelGrid, class_list: tuple[int, ...]) -> IoUResult:
    """Per-foreground-class IoU between local-labeled masks.

    Local label c + 1 corresponds to class_list[c]; the returned table
    is keyed by those global identifiers.
    """
    _check_sizes(pred, gt)
    keep = (pred.labels != IGNORE_LABEL) & (gt.labels != IGNORE_LABEL)
    per_class = {}
    for c, cid in enumerate(class_list):
        p = (pred.labels == c + 1) & keep
        g = (gt.labels == c + 1) & keep
        per_class[int(cid)] = _iou(p, g)
    values = list(per_class.values())
    return IoUResult(per_class, float(np.mean(values)))


def binary_iou(pred: LabelGrid, gt: LabelGrid) -> float:
    """Average of foreground IoU (all classes merged) and background IoU."""
    _check_sizes(pred, gt)
    keep = (pred.labels != IGNORE_LABEL) & (gt.labels != IGNORE_LABEL)
    p_fg = (pred.labels != 0) & (pred.labels != IGNORE_LABEL) & keep
    g_fg = (gt.labels != 0) & (gt.labels != IGNORE_LABEL) & keep
    p_bg = (pred.labels == 0) & keep
    g_bg = (gt.labels == 0) & keep
    return 0.5 * (_iou(p_fg, g_fg) + _iou(p_bg, g_bg))
