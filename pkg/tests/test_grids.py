import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partproto.errors import DimensionMismatch, ZeroNormVector
from partproto.grids import (
    IGNORE_LABEL,
    FeatureGrid,
    LabelGrid,
    cosine_similarity,
    gather_class_features,
    pairwise_cosine,
    resize_mask_nearest,
    upsample_bilinear,
)


class TestCosine:
    def test_identical_direction(self):
        assert cosine_similarity([1.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)

    def test_45_degrees(self):
        assert cosine_similarity([1.0, 0.0], [1.0, 1.0]) == pytest.approx(
            0.7071067811865475, abs=1e-7
        )

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        a, b = rng.standard_normal(16), rng.standard_normal(16)
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a))

    def test_zero_norm_raises(self):
        with pytest.raises(ZeroNormVector):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ZeroNormVector):
            cosine_similarity([1.0, 0.0], [1e-13, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_self_similarity_and_bound(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(8) + 0.1
        b = rng.standard_normal(8) + 0.1
        assert cosine_similarity(a, a) == pytest.approx(1.0, abs=1e-9)
        assert abs(cosine_similarity(a, b)) <= 1.0 + 1e-6

    def test_pairwise_matches_scalar(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((5, 7)).astype(np.float32)
        b = rng.standard_normal((4, 7)).astype(np.float32)
        m = pairwise_cosine(a, b)
        for i in range(5):
            for j in range(4):
                assert m[i, j] == pytest.approx(
                    cosine_similarity(a[i], b[j]), abs=1e-6
                )


class TestResizeNearest:
    def test_halved_left_right_split(self):
        mask = LabelGrid(np.array([[1, 1, 0, 0]] * 4, dtype=np.uint8))
        out = resize_mask_nearest(mask, 2, 2)
        assert out.labels.tolist() == [[1, 0], [1, 0]]

    def test_identity(self):
        rng = np.random.default_rng(1)
        mask = LabelGrid(rng.integers(0, 3, size=(5, 7)).astype(np.uint8))
        out = resize_mask_nearest(mask, 5, 7)
        assert np.array_equal(out.labels, mask.labels)

    def test_constant_field(self):
        mask = LabelGrid(np.ones((4, 4), dtype=np.uint8))
        for h, w in [(1, 1), (3, 5), (9, 2)]:
            assert (resize_mask_nearest(mask, h, w).labels == 1).all()

    def test_no_new_labels(self):
        rng = np.random.default_rng(2)
        mask = LabelGrid(rng.choice([0, 2, 5, IGNORE_LABEL], size=(6, 6)).astype(np.uint8))
        out = resize_mask_nearest(mask, 3, 11)
        assert set(np.unique(out.labels)) <= set(np.unique(mask.labels))


class TestUpsampleBilinear:
    def test_constant_field_exact(self):
        grid = np.full((2, 3, 3), 0.3, dtype=np.float32)
        out = upsample_bilinear(grid, 7, 5)
        assert (out == np.float32(0.3)).all()

    def test_1x2_to_1x3(self):
        grid = np.array([[[0.0, 1.0]]], dtype=np.float32)
        out = upsample_bilinear(grid, 1, 3)
        assert out[0, 0].tolist() == [0.0, 0.5, 1.0]

    def test_single_cell_extension(self):
        grid = np.array([[[0.7]]], dtype=np.float32)
        out = upsample_bilinear(grid, 4, 4)
        assert (out == np.float32(0.7)).all()

    def test_corners_exact(self):
        rng = np.random.default_rng(4)
        grid = rng.standard_normal((1, 4, 5)).astype(np.float32)
        out = upsample_bilinear(grid, 13, 9)
        assert out[0, 0, 0] == grid[0, 0, 0]
        assert out[0, -1, 0] == grid[0, -1, 0]
        assert out[0, 0, -1] == grid[0, 0, -1]
        assert out[0, -1, -1] == grid[0, -1, -1]

    @given(st.integers(0, 2**32 - 1), st.integers(1, 9), st.integers(1, 9))
    @settings(max_examples=40, deadline=None)
    def test_bounded_by_input(self, seed, oh, ow):
        rng = np.random.default_rng(seed)
        grid = rng.standard_normal((2, 3, 4)).astype(np.float32)
        out = upsample_bilinear(grid, oh, ow)
        for ch in range(2):
            assert out[ch].min() >= grid[ch].min()
            assert out[ch].max() <= grid[ch].max()


class TestGather:
    def test_row_major_order(self):
        grid = FeatureGrid(np.arange(8, dtype=np.float32).reshape(2, 2, 2))
        mask = LabelGrid(np.array([[1, 0], [0, 1]], dtype=np.uint8))
        out = gather_class_features(grid, mask, 1)
        assert out.tolist() == [[0.0, 1.0], [6.0, 7.0]]

    def test_absent_class_empty(self):
        grid = FeatureGrid(np.ones((2, 2, 3), dtype=np.float32))
        mask = LabelGrid(np.zeros((2, 2), dtype=np.uint8))
        assert gather_class_features(grid, mask, 2).shape == (0, 3)

    def test_ignore_never_returned(self):
        grid = FeatureGrid(np.ones((2, 2, 3), dtype=np.float32))
        mask = LabelGrid(np.full((2, 2), IGNORE_LABEL, dtype=np.uint8))
        for cid in (0, 1, IGNORE_LABEL):
            assert gather_class_features(grid, mask, cid).shape[0] == 0

    def test_partition_of_cells(self):
        rng = np.random.default_rng(5)
        grid = FeatureGrid(rng.standard_normal((4, 5, 2)).astype(np.float32))
        mask = LabelGrid(rng.choice([0, 1, 2, IGNORE_LABEL], size=(4, 5)).astype(np.uint8))
        total = sum(
            gather_class_features(grid, mask, c).shape[0] for c in (0, 1, 2)
        )
        assert total + int((mask.labels == IGNORE_LABEL).sum()) == 20

    def test_size_mismatch(self):
        grid = FeatureGrid(np.ones((2, 2, 3), dtype=np.float32))
        mask = LabelGrid(np.zeros((3, 2), dtype=np.uint8))
        with pytest.raises(DimensionMismatch):
            gather_class_features(grid, mask, 0)


class TestTypes:
    def test_feature_grid_rejects_nan(self):
        bad = np.ones((2, 2, 2), dtype=np.float32)
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            FeatureGrid(bad)

    def test_feature_grid_immutable(self):
        g = FeatureGrid(np.ones((2, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError):
            g.values[0, 0, 0] = 5.0

    def test_label_grid_casts_safe_ints(self):
        g = LabelGrid(np.array([[0, 255], [3, 1]]))
        assert g.labels.dtype == np.uint8

    def test_label_grid_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            LabelGrid(np.array([[0, 300]]))
