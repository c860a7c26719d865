import math

import numpy as np
import pytest

from partproto.errors import DimensionMismatch
from partproto.grids import IGNORE_LABEL, LabelGrid
from partproto.losses import meta_cross_entropy_loss
from partproto.matching import ScoreStack


def stack_of(values):
    return ScoreStack(np.asarray(values, dtype=np.float32))


class TestCrossEntropy:
    def test_uniform_two_channels_is_ln2(self):
        stack = stack_of(np.zeros((2, 3, 3)))
        gt = LabelGrid(np.zeros((3, 3), dtype=np.uint8))
        assert meta_cross_entropy_loss(stack, gt, 1.0) == pytest.approx(math.log(2.0))

    def test_saturated_scores_vanish(self):
        values = np.full((2, 2, 2), -1.0, dtype=np.float32)
        values[1] = 1.0
        gt = LabelGrid(np.ones((2, 2), dtype=np.uint8))
        assert meta_cross_entropy_loss(stack_of(values), gt, 20.0) < 1e-10

    def test_two_cell_hand_computation(self):
        # cell 0 scores (0.5, 0.1) label 0; cell 1 scores (0.2, 0.9) label 1
        values = np.array([[[0.5, 0.2]], [[0.1, 0.9]]], dtype=np.float32)
        gt = LabelGrid(np.array([[0, 1]], dtype=np.uint8))
        want = 0.5 * (
            -math.log(math.exp(0.5) / (math.exp(0.5) + math.exp(0.1)))
            + -math.log(math.exp(0.9) / (math.exp(0.2) + math.exp(0.9)))
        )
        got = meta_cross_entropy_loss(stack_of(values), gt, 1.0)
        assert got == pytest.approx(want, rel=1e-6)

    def test_temperature_scales_logits(self):
        values = np.array([[[0.5]], [[0.1]]], dtype=np.float32)
        gt = LabelGrid(np.array([[0]], dtype=np.uint8))
        t5 = meta_cross_entropy_loss(stack_of(values), gt, 5.0)
        want = -math.log(math.exp(2.5) / (math.exp(2.5) + math.exp(0.5)))
        assert t5 == pytest.approx(want, rel=1e-6)

    def test_ignored_cells_excluded(self):
        values = np.zeros((2, 1, 2), dtype=np.float32)
        values[0, 0, 0] = 5.0  # would be a huge loss if counted with label 1
        gt = LabelGrid(np.array([[IGNORE_LABEL, 0]], dtype=np.uint8))
        got = meta_cross_entropy_loss(stack_of(values), gt, 1.0)
        assert got == pytest.approx(math.log(2.0))

    def test_all_ignored_is_zero(self):
        values = np.zeros((2, 1, 1), dtype=np.float32)
        gt = LabelGrid(np.array([[IGNORE_LABEL]], dtype=np.uint8))
        assert meta_cross_entropy_loss(stack_of(values), gt, 1.0) == 0.0

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            values = rng.standard_normal((3, 4, 4)).astype(np.float32)
            gt = LabelGrid(rng.integers(0, 3, size=(4, 4)).astype(np.uint8))
            assert meta_cross_entropy_loss(stack_of(values), gt, 20.0) >= 0.0

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            meta_cross_entropy_loss(
                stack_of(np.zeros((2, 2, 2))),
                LabelGrid(np.zeros((3, 3), dtype=np.uint8)),
                1.0,
            )

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            meta_cross_entropy_loss(
                stack_of(np.zeros((2, 1, 1))),
                LabelGrid(np.array([[4]], dtype=np.uint8)),
                1.0,
            )
