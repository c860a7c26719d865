import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partproto.errors import DimensionMismatch
from partproto.grids import IGNORE_LABEL, LabelGrid
from partproto.metrics import binary_iou, mean_iou


def grid(rows):
    return LabelGrid(np.array(rows, dtype=np.uint8))


def oracle_iou(pred, gt, label):
    """Independent per-pixel counting oracle."""
    inter = union = 0
    for p, g in zip(pred.labels.ravel(), gt.labels.ravel()):
        if p == IGNORE_LABEL or g == IGNORE_LABEL:
            continue
        a, b = p == label, g == label
        inter += a and b
        union += a or b
    return 1.0 if union == 0 else inter / union


class TestMeanIoU:
    def test_identity(self):
        g = grid([[1, 0], [0, 1]])
        r = mean_iou(g, g, (5,))
        assert r.mean == 1.0
        assert r.per_class == {5: 1.0}

    def test_disjoint_foregrounds(self):
        r = mean_iou(grid([[1, 1], [0, 0]]), grid([[0, 0], [1, 1]]), (5,))
        assert r.per_class[5] == 0.0

    def test_half_overlap(self):
        r = mean_iou(grid([[1, 1], [0, 0]]), grid([[1, 0], [0, 0]]), (5,))
        assert r.per_class[5] == pytest.approx(0.5)

    def test_absent_class_counts_as_one(self):
        r = mean_iou(grid([[0, 0]]), grid([[0, 0]]), (3, 4))
        assert r.per_class == {3: 1.0, 4: 1.0}
        assert r.mean == 1.0

    def test_ignored_pixels_excluded(self):
        pred = grid([[1, 1], [0, 0]])
        gt = grid([[1, IGNORE_LABEL], [0, 0]])
        r = mean_iou(pred, gt, (5,))
        assert r.per_class[5] == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a = grid(rng.choice([0, 1, 2], size=(5, 5)))
        b = grid(rng.choice([0, 1, 2], size=(5, 5)))
        assert mean_iou(a, b, (1, 2)).mean == pytest.approx(mean_iou(b, a, (1, 2)).mean)

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mean_iou(grid([[0]]), grid([[0, 0]]), (1,))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=200, deadline=None)
    def test_matches_counting_oracle(self, seed):
        rng = np.random.default_rng(seed)
        pred = grid(rng.integers(0, 3, size=(3, 3)))
        gt = grid(rng.integers(0, 3, size=(3, 3)))
        r = mean_iou(pred, gt, (1, 2))
        for c, cid in enumerate((1, 2)):
            assert r.per_class[cid] == oracle_iou(pred, gt, c + 1)


class TestBinaryIoU:
    def test_identity(self):
        g = grid([[1, 2], [0, 1]])
        assert binary_iou(g, g) == 1.0

    def test_total_disagreement(self):
        assert binary_iou(grid([[1, 1], [1, 1]]), grid([[0, 0], [0, 0]])) == 0.0

    def test_worked_example(self):
        got = binary_iou(grid([[1, 1], [0, 0]]), grid([[1, 0], [0, 0]]))
        assert got == pytest.approx(7 / 12)

    def test_multiclass_merged_to_foreground(self):
        pred = grid([[1, 2], [0, 0]])
        gt = grid([[2, 1], [0, 0]])
        assert binary_iou(pred, gt) == 1.0

    def test_bounded(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = grid(rng.integers(0, 3, size=(4, 4)))
            b = grid(rng.integers(0, 3, size=(4, 4)))
            assert 0.0 <= binary_iou(a, b) <= 1.0
