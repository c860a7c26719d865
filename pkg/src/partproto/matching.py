"""Prototype-pixel matching and mask prediction.

Every query cell is scored against every part prototype by cosine
similarity; per-class scores are the max over that class's parts. The
stacked class scores are bilinearly upsampled to the output resolution
and the per-pixel argmax (ties to the lowest channel, i.e. background
first) becomes the predicted mask.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .grids import FeatureGrid, LabelGrid, pairwise_cosine, upsample_bilinear
from .prototypes import STAGE_REFINED, PrototypeSet, require_stage


@dataclass(frozen=True)
class ScoreStack:
    """Per-class cosine score grids, channel 0 is background.

    values: (C + 1, H, W) float32 in [-1, 1].
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if v.ndim != 3 or v.shape[0] < 1:
            raise DimensionMismatch(f"score stack must be (C+1, H, W), got {v.shape}")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def part_score_maps(query: FeatureGrid, protos: PrototypeSet) -> list[np.ndarray]:
    """One (H, W) float32 cosine map per part prototype, in part order."""
    require_stage(protos, STAGE_REFINED)
    if protos.channels != query.channels:
        raise DimensionMismatch(
            f"query has {query.channels} channels, prototypes {protos.channels}"
        )
    sims = pairwise_cosine(query.flat(), protos.vectors)
    h, w = query.height, query.width
    return [sims[:, j].reshape(h, w).copy() for j in range(len(protos))]


def fuse_and_stack(per_class_maps: list[list[np.ndarray]]) -> ScoreStack:
    """Max-fuse each class's part maps and stack classes background-first."""
    if not per_class_maps or any(not maps for maps in per_class_maps):
        raise DimensionMismatch("every class needs at least one part map")
    shape = per_class_maps[0][0].shape
    fused = []
    for maps in per_class_maps:
        for m in maps:
            if m.shape != shape:
                raise DimensionMismatch("part maps must share spatial size")
        fused.append(np.max(np.stack(maps, axis=0), axis=0))
    return ScoreStack(np.stack(fused, axis=0))


def predict_query_mask(
    stack: ScoreStack, out_h: int, out_w: int, class_list: tuple[int, ...]
) -> LabelGrid:
    """Upsample scores, then take the per-pixel argmax over channels.

    Channel c > 0 maps to episode-local label c (the class at position
    c - 1 of `class_list`); ties go to the lowest channel, so exact
    background ties stay background.
    """
    if stack.n_channels != len(class_list) + 1:
        raise DimensionMismatch(
            f"stack has {stack.n_channels} channels for {len(class_list)} classes"
        )
    up = upsample_bilinear(stack.values, out_h, out_w)
    return LabelGrid(np.argmax(up, axis=0).astype(np.uint8))
