import numpy as np
import pytest

from partproto.errors import DimensionMismatch
from partproto.grids import FeatureGrid, LabelGrid, resize_mask_nearest, upsample_bilinear
from partproto.matching import ScoreStack, fuse_and_stack, part_score_maps, predict_query_mask
from partproto.prototypes import STAGE_REFINED, PrototypeSet


def refined(vectors, class_id=1):
    return PrototypeSet(class_id, np.asarray(vectors, dtype=np.float32), STAGE_REFINED)


class TestPartScores:
    def test_matching_cell_scores_one(self):
        v = np.zeros((2, 2, 3), dtype=np.float32)
        v[...] = [0.0, 1.0, 0.0]
        v[0, 1] = [1.0, 0.0, 0.0]
        grid = FeatureGrid(v)
        maps = part_score_maps(grid, refined([[1.0, 0.0, 0.0]]))
        assert maps[0][0, 1] == pytest.approx(1.0)
        assert maps[0][0, 0] == pytest.approx(0.0, abs=1e-6)

    def test_matches_independent_cosine(self):
        rng = np.random.default_rng(0)
        grid = FeatureGrid((rng.standard_normal((2, 2, 5)) + 0.2).astype(np.float32))
        protos = refined(rng.standard_normal((2, 5)) + 0.2)
        maps = part_score_maps(grid, protos)
        for j in range(2):
            for r in range(2):
                for c in range(2):
                    f = grid.values[r, c].astype(np.float64)
                    p = protos.vectors[j].astype(np.float64)
                    want = f @ p / (np.linalg.norm(f) * np.linalg.norm(p))
                    assert maps[j][r, c] == pytest.approx(want, abs=1e-6)

    def test_channel_mismatch(self):
        grid = FeatureGrid(np.ones((2, 2, 3), dtype=np.float32))
        with pytest.raises(DimensionMismatch):
            part_score_maps(grid, refined([[1.0, 0.0]]))


class TestFuse:
    def test_single_part_passthrough(self):
        m = np.random.default_rng(1).standard_normal((3, 3)).astype(np.float32)
        stack = fuse_and_stack([[m]])
        assert np.array_equal(stack.values[0], m)

    def test_elementwise_max(self):
        a = np.array([[0.2]], dtype=np.float32)
        b = np.array([[0.9]], dtype=np.float32)
        stack = fuse_and_stack([[a, b]])
        assert stack.values[0, 0, 0] == np.float32(0.9)

    def test_part_order_invariant(self):
        rng = np.random.default_rng(2)
        maps = [rng.standard_normal((4, 4)).astype(np.float32) for _ in range(3)]
        s1 = fuse_and_stack([maps])
        s2 = fuse_and_stack([[maps[2], maps[0], maps[1]]])
        assert np.array_equal(s1.values, s2.values)

    def test_adding_part_monotone(self):
        rng = np.random.default_rng(3)
        maps = [rng.standard_normal((4, 4)).astype(np.float32) for _ in range(2)]
        extra = rng.standard_normal((4, 4)).astype(np.float32)
        base = fuse_and_stack([maps]).values[0]
        more = fuse_and_stack([maps + [extra]]).values[0]
        assert (more >= base).all()

    def test_spatial_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fuse_and_stack(
                [[np.ones((2, 2), np.float32)], [np.ones((3, 3), np.float32)]]
            )


class TestPredict:
    def test_dominant_channel(self):
        values = np.stack(
            [np.full((2, 2), 0.1, np.float32), np.full((2, 2), 0.9, np.float32)]
        )
        pred = predict_query_mask(ScoreStack(values), 4, 4, (7,))
        assert (pred.labels == 1).all()

    def test_exact_tie_goes_to_background(self):
        values = np.stack(
            [np.full((2, 2), 0.5, np.float32), np.full((2, 2), 0.5, np.float32)]
        )
        pred = predict_query_mask(ScoreStack(values), 2, 2, (7,))
        assert (pred.labels == 0).all()

    def test_labels_in_range(self):
        rng = np.random.default_rng(4)
        values = rng.standard_normal((3, 4, 4)).astype(np.float32)
        pred = predict_query_mask(ScoreStack(values), 8, 8, (5, 9))
        assert set(np.unique(pred.labels)) <= {0, 1, 2}

    def test_channel_count_checked(self):
        values = np.zeros((2, 2, 2), dtype=np.float32)
        with pytest.raises(DimensionMismatch):
            predict_query_mask(ScoreStack(values), 2, 2, (5, 9))


class TestSelfSegmentation:
    def test_query_equals_support_recovers_mask(self):
        """Single holistic prototype, query = support: the prediction
        should match the nearest-prototype classification of the mask."""
        rng = np.random.default_rng(5)
        h = w = 12
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[3:9, 4:10] = 1
        means = np.stack([np.array([2.0, 0, 0, 0]), np.array([0, 2.0, 0, 0])])
        feats = means[mask.astype(int)] + 0.1 * rng.standard_normal((h, w, 4))
        grid = FeatureGrid(feats.astype(np.float32))

        protos = []
        for c in (0, 1):
            cells = grid.flat()[mask.ravel() == c].astype(np.float64)
            protos.append(cells.mean(axis=0))

        maps = [
            part_score_maps(grid, refined([p], class_id=c))
            for c, p in enumerate(protos)
        ]
        stack = fuse_and_stack(maps)
        pred = predict_query_mask(stack, h, w, (1,))
        agree = (pred.labels == mask).mean()
        assert agree >= 0.95

    def test_downsampled_mask_round_trip(self):
        """Prediction upsampled from feature resolution should agree with
        the nearest-downsampled-then-upsampled mask on most pixels."""
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:12, 2:10] = 1
        small = resize_mask_nearest(LabelGrid(mask), 8, 8)
        onehot = np.stack(
            [(small.labels == 0).astype(np.float32), (small.labels == 1).astype(np.float32)]
        )
        pred = predict_query_mask(ScoreStack(onehot), 16, 16, (1,))
        agree = (pred.labels == mask).mean()
        assert agree >= 0.95
