import numpy as np
import pytest

from partproto.clustering import RegionPool
from partproto.errors import DimensionMismatch, StageMismatch
from partproto.prototypes import STAGE_CONTEXTUAL, STAGE_REFINED, PrototypeSet
from partproto.refine import (
    MessageWeights,
    propagate_region_features,
    refine_with_regions,
    region_attention_weights,
    select_relevant_regions,
)


def make_pool(vectors):
    vectors = np.asarray(vectors, dtype=np.float32)
    n = vectors.shape[0]
    return RegionPool(
        vectors,
        np.zeros(n, dtype=np.int64),
        tuple(np.array([i]) for i in range(n)),
    )


def ctx_protos(vectors, class_id=1):
    return PrototypeSet(class_id, np.asarray(vectors, dtype=np.float32), STAGE_CONTEXTUAL)


class TestSelection:
    def test_keeps_self_similar_region(self):
        p = ctx_protos([[1.0, 0.0]])
        pool = make_pool([[1.0, 0.0]])
        kept = select_relevant_regions(pool, p, sigma=0.0)
        assert len(kept) == 1

    def test_drops_orthogonal_region_strictly(self):
        p = ctx_protos([[1.0, 0.0]])
        pool = make_pool([[0.0, 1.0]])
        kept = select_relevant_regions(pool, p, sigma=0.0)
        assert len(kept) == 0

    def test_order_preserved(self):
        p = ctx_protos([[1.0, 0.0]])
        pool = make_pool([[1.0, 0.1], [0.0, 1.0], [1.0, -0.1], [2.0, 0.0]])
        kept = select_relevant_regions(pool, p, sigma=0.0)
        assert np.allclose(kept.vectors, pool.vectors[[0, 2, 3]])

    def test_stage_checked(self):
        p = PrototypeSet(0, np.ones((1, 2), dtype=np.float32), STAGE_REFINED)
        with pytest.raises(StageMismatch):
            select_relevant_regions(make_pool([[1.0, 0.0]]), p, 0.0)


class TestPropagation:
    def test_single_region_unchanged(self):
        pool = make_pool([[1.0, -2.0]])
        out = propagate_region_features(pool, MessageWeights.initial(2))
        assert np.array_equal(out.vectors, pool.vectors)

    def test_zero_weight_matrix_identity(self):
        rng = np.random.default_rng(0)
        pool = make_pool(rng.standard_normal((4, 3)) + 0.2)
        w = MessageWeights(np.zeros((3, 3), dtype=np.float32))
        out = propagate_region_features(pool, w)
        assert np.array_equal(out.vectors, pool.vectors)

    def test_identical_pair_with_identity_map(self):
        r = np.array([0.5, -0.25, 1.0], dtype=np.float32)
        pool = make_pool([r, r])
        w = MessageWeights(np.eye(3, dtype=np.float32))
        out = propagate_region_features(pool, w)
        expected = r + np.maximum(r, 0.0)
        assert np.allclose(out.vectors[0], expected, rtol=1e-6)
        assert np.allclose(out.vectors[1], expected, rtol=1e-6)

    def test_nonparametric_ignores_matrix(self):
        rng = np.random.default_rng(1)
        pool = make_pool(rng.standard_normal((5, 4)) + 0.3)
        w1 = MessageWeights(rng.standard_normal((4, 4)).astype(np.float32), True)
        w2 = MessageWeights(rng.standard_normal((4, 4)).astype(np.float32), True)
        a = propagate_region_features(pool, w1)
        b = propagate_region_features(pool, w2)
        assert np.array_equal(a.vectors, b.vectors)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        vecs = (rng.standard_normal((5, 4)) + 0.2).astype(np.float32)
        w = MessageWeights(rng.standard_normal((4, 4)).astype(np.float32))
        perm = np.array([3, 1, 4, 0, 2])
        out = propagate_region_features(make_pool(vecs), w)
        out_p = propagate_region_features(make_pool(vecs[perm]), w)
        assert np.allclose(out.vectors[perm], out_p.vectors, atol=1e-6)

    def test_dimension_mismatch(self):
        pool = make_pool([[1.0, 0.0, 0.0]])
        with pytest.raises(DimensionMismatch):
            propagate_region_features(pool, MessageWeights.initial(2))


class TestRefinement:
    def test_empty_region_set_advances_stage(self):
        p = ctx_protos([[1.0, 2.0], [3.0, 4.0]])
        empty = propagate_region_features(
            make_pool(np.empty((0, 2), dtype=np.float32)), MessageWeights.initial(2)
        )
        out = refine_with_regions(p, empty, 0.2)
        assert out.stage == STAGE_REFINED
        assert np.array_equal(out.vectors, p.vectors)

    def test_lambda_zero_identity(self):
        rng = np.random.default_rng(3)
        p = ctx_protos(rng.standard_normal((3, 4)))
        aug = propagate_region_features(
            make_pool(rng.standard_normal((4, 4)) + 0.1), MessageWeights.initial(4)
        )
        out = refine_with_regions(p, aug, 0.0)
        assert np.array_equal(out.vectors, p.vectors)

    def test_single_identical_region_scales(self):
        v = np.array([[0.6, 0.8]], dtype=np.float32)
        p = ctx_protos(v)
        aug = propagate_region_features(make_pool(v.copy()), MessageWeights(np.zeros((2, 2), np.float32)))
        out = refine_with_regions(p, aug, 0.2)
        assert np.allclose(out.vectors, 1.2 * v, rtol=1e-6)

    def test_phi_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        protos = rng.standard_normal((5, 6)) + 0.2
        regions = rng.standard_normal((7, 6)) + 0.2
        phi = region_attention_weights(
            protos.astype(np.float32), regions.astype(np.float32)
        )
        assert (phi >= 0).all()
        assert np.allclose(phi.sum(axis=1), 1.0, atol=1e-6)

    def test_phi_uniform_fallback(self):
        protos = np.array([[1.0, 0.0]], dtype=np.float32)
        regions = np.array([[-1.0, 0.0], [0.0, -1.0]], dtype=np.float32)
        phi = region_attention_weights(protos, regions)
        assert np.allclose(phi, 0.5)

    def test_stage_checked(self):
        p = PrototypeSet(0, np.ones((1, 2), dtype=np.float32), STAGE_REFINED)
        aug = propagate_region_features(
            make_pool(np.ones((1, 2), dtype=np.float32)), MessageWeights.initial(2)
        )
        with pytest.raises(StageMismatch):
            refine_with_regions(p, aug, 0.2)


class TestComposedIdentity:
    def test_full_chain_identity_with_lambda_zero(self):
        rng = np.random.default_rng(5)
        p = ctx_protos(rng.standard_normal((4, 8)) + 0.1)
        pool = make_pool(rng.standard_normal((6, 8)) + 0.1)
        w = MessageWeights.initial(8)
        selected = select_relevant_regions(pool, p, 0.0)
        augmented = propagate_region_features(selected, w)
        out = refine_with_regions(p, augmented, 0.0)
        assert np.array_equal(out.vectors, p.vectors)
