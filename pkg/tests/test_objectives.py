import math

import numpy as np
import pytest

from t4v.classifiers import build_learnable_baseline, build_textual
from t4v.errors import DimensionError, LabelError, NormalizationError
from t4v.numkit import RngState, l2_normalize_rows
from t4v.objectives import (
    Batch,
    GatherTopology,
    LogitScale,
    ce_loss,
    classify_batch,
    infonce_gathered,
    infonce_local_only,
    reduce_shard_grads,
    split_into_shards,
)


class TestCeLoss:
    def test_uniform_logits(self):
        loss, grad = ce_loss(np.zeros(4), 1)
        assert abs(loss - math.log(4)) < 1e-12
        expect = np.full(4, 0.25)
        expect[1] -= 1.0
        np.testing.assert_allclose(grad, expect, atol=1e-12)

    def test_max_shift_stability(self):
        loss, grad = ce_loss(np.array([1000.0, 0.0]), 0)
        assert loss < 1e-12 and np.isfinite(grad).all()

    def test_direct_evaluation_oracle(self):
        loss, _ = ce_loss(np.array([1.0, 2.0, 3.0]), 2)
        oracle = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
        assert abs(loss - oracle) < 1e-12

    def test_gradient_sums_to_zero(self):
        for seed in range(10):
            logits = RngState(seed).generator().standard_normal(7) * 5
            _, grad = ce_loss(logits, seed % 7)
            assert abs(grad.sum()) < 1e-12

    def test_shift_invariance(self):
        logits = RngState(1).generator().standard_normal(5)
        l0, g0 = ce_loss(logits, 3)
        l1, g1 = ce_loss(logits + 123.456, 3)
        assert abs(l0 - l1) < 1e-12
        np.testing.assert_allclose(g0, g1, atol=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            ce_loss(np.zeros(3), 3)


class TestClassifyBatch:
    def test_frozen_has_no_weight_gradient(self):
        W = build_textual(RngState(0).generator().standard_normal((3, 4)), list("abc"))
        batch = Batch(RngState(1).generator().standard_normal((5, 4)), np.zeros(5, dtype=int))
        res = classify_batch(W, batch)
        assert res.grad_weights is None

    def test_identity_reduces_to_ce(self):
        W = build_learnable_baseline(3, 3, RngState(2))
        W = W.with_weights(np.eye(3))
        z = np.zeros((1, 3))
        z[0, 1] = 1.0
        res = classify_batch(W, Batch(z, np.array([1])), temperature=1.0)
        oracle, _ = ce_loss(z[0], 1)
        assert abs(res.loss - oracle) < 1e-12

    def test_weight_gradient_matches_finite_differences(self):
        gen = RngState(3).generator()
        W = build_learnable_baseline(4, 3, RngState(4))
        z = gen.standard_normal((6, 4))
        labels = gen.integers(0, 3, size=6)
        temp = 1.7
        res = classify_batch(W, Batch(z, labels), temperature=temp)
        eps = 1e-6
        fd = np.zeros_like(W.weights)
        for i in range(3):
            for j in range(4):
                wplus = W.weights.copy()
                wplus[i, j] += eps
                lp = classify_batch(W.with_weights(wplus), Batch(z, labels), temp).loss
                wminus = W.weights.copy()
                wminus[i, j] -= eps
                lm = classify_batch(W.with_weights(wminus), Batch(z, labels), temp).loss
                fd[i, j] = (lp - lm) / (2 * eps)
        rel = np.linalg.norm(res.grad_weights - fd) / np.linalg.norm(fd)
        assert rel < 1e-6
        # oracle structure: outer(softmax - onehot, z) / b
        logits = temp * z @ W.weights.T
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs = e / e.sum(axis=1, keepdims=True)
        probs[np.arange(6), labels] -= 1.0
        expect = temp * probs.T @ z / 6
        np.testing.assert_allclose(res.grad_weights, expect, atol=1e-12)

    def test_embedding_gradient_matches_finite_differences(self):
        gen = RngState(5).generator()
        W = build_textual(gen.standard_normal((3, 4)), list("abc"))
        z = gen.standard_normal((2, 4))
        labels = np.array([0, 2])
        res = classify_batch(W, Batch(z, labels))
        eps = 1e-6
        fd = np.zeros_like(z)
        for i in range(2):
            for j in range(4):
                zp = z.copy()
                zp[i, j] += eps
                lp = classify_batch(W, Batch(zp, labels)).loss
                zp[i, j] -= 2 * eps
                lm = classify_batch(W, Batch(zp, labels)).loss
                fd[i, j] = (lp - lm) / (2 * eps)
        assert np.linalg.norm(res.grad_embeddings - fd) / np.linalg.norm(fd) < 1e-6

    def test_dimension_mismatch(self):
        W = build_textual(np.ones((2, 3)), ["a", "b"])
        with pytest.raises(DimensionError):
            classify_batch(W, Batch(np.ones((1, 4)), np.array([0])))


def _unit_pairs(seed, b, d=12):
    gen = RngState(seed).generator()
    zv = l2_normalize_rows(gen.standard_normal((b, d)))
    zt = l2_normalize_rows(gen.standard_normal((b, d)))
    return zv, zt


def _oracle_full_infonce(zv, zt, s):
    """Independent single-process implementation of symmetric InfoNCE."""
    n = zv.shape[0]
    idx = np.arange(n)

    def ce_rows(logits):
        m = logits.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
        return (lse - logits[idx, idx]).mean()

    def softmax(logits):
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    lv, lt = s * zv @ zt.T, s * zt @ zv.T
    loss = 0.5 * (ce_rows(lv) + ce_rows(lt))
    pv, pt = softmax(lv), softmax(lt)
    pv[idx, idx] -= 1.0
    pt[idx, idx] -= 1.0
    pv /= n
    pt /= n
    gv = 0.5 * s * (pv @ zt + pt.T @ zt)
    gt = 0.5 * s * (pv.T @ zv + pt @ zv)
    gs = 0.5 * ((pv * (zv @ zt.T)).sum() + (pt * (zt @ zv.T)).sum()) * s
    return loss, gv, gt, gs


class TestInfoNceGathered:
    def test_single_pair_loss_zero(self):
        zv, zt = _unit_pairs(0, 1)
        losses, grads = infonce_gathered([Batch(zv, np.array([0]), zt)], LogitScale())
        assert losses[0] == 0.0
        np.testing.assert_allclose(grads[0].video, 0.0, atol=1e-15)

    def test_single_shard_matches_direct(self):
        zv, zt = _unit_pairs(1, 6)
        scale = LogitScale(log_scale=math.log(5.0))
        shards = split_into_shards(zv, zt, np.arange(6), GatherTopology(1, 6))
        losses, grads = infonce_gathered(shards, scale)
        oracle_loss, gv, gt, gs = _oracle_full_infonce(zv, zt, scale.scale)
        assert abs(losses[0] - oracle_loss) < 1e-12
        np.testing.assert_allclose(grads[0].video, gv, atol=1e-12)
        np.testing.assert_allclose(grads[0].text, gt, atol=1e-12)
        assert abs(grads[0].log_scale - gs) < 1e-12

    def test_sharded_equals_full_batch(self):
        zv, zt = _unit_pairs(2, 4)
        scale = LogitScale(log_scale=math.log(3.0))
        full_loss, gv, gt, gs = _oracle_full_infonce(zv, zt, scale.scale)
        shards = split_into_shards(zv, zt, np.arange(4), GatherTopology(2, 2))
        losses, grads = infonce_gathered(shards, scale)
        red = reduce_shard_grads(grads)
        assert abs(np.mean(losses) - full_loss) < 1e-9
        np.testing.assert_allclose(red.video, gv, atol=1e-9)
        np.testing.assert_allclose(red.text, gt, atol=1e-9)
        assert abs(red.log_scale - gs) < 1e-9

    def test_log_scale_gradient_matches_finite_differences(self):
        zv, zt = _unit_pairs(3, 5)
        base = math.log(4.0)
        shards = split_into_shards(zv, zt, np.arange(5), GatherTopology(1, 5))
        _, grads = infonce_gathered(shards, LogitScale(log_scale=base))
        eps = 1e-6
        lp, _ = infonce_gathered(shards, LogitScale(log_scale=base + eps))
        lm, _ = infonce_gathered(shards, LogitScale(log_scale=base - eps))
        fd = (lp[0] - lm[0]) / (2 * eps)
        assert abs(grads[0].log_scale - fd) < 1e-6

    def test_clamped_scale_has_zero_gradient(self):
        zv, zt = _unit_pairs(4, 3)
        scale = LogitScale(log_scale=math.log(500.0), clamp_max=100.0)
        assert scale.scale == 100.0
        shards = [Batch(zv, np.arange(3), zt)]
        _, grads = infonce_gathered(shards, scale)
        assert grads[0].log_scale == 0.0

    def test_non_normalized_rows_rejected(self):
        gen = RngState(5).generator()
        zv = gen.standard_normal((2, 4))  # not normalized
        zt = l2_normalize_rows(gen.standard_normal((2, 4)))
        with pytest.raises(NormalizationError):
            infonce_gathered([Batch(zv, np.arange(2), zt)], LogitScale())

    def test_missing_text_rejected(self):
        zv, _ = _unit_pairs(6, 2)
        with pytest.raises(NormalizationError):
            infonce_gathered([Batch(zv, np.arange(2))], LogitScale())


class TestInfoNceLocalOnly:
    def test_single_shard_identical_to_gathered(self):
        zv, zt = _unit_pairs(7, 5)
        shards = [Batch(zv, np.arange(5), zt)]
        scale = LogitScale()
        l_loc, g_loc = infonce_local_only(shards, scale)
        l_gat, g_gat = infonce_gathered(shards, scale)
        assert abs(l_loc[0] - l_gat[0]) < 1e-12
        np.testing.assert_allclose(g_loc[0].video, g_gat[0].video, atol=1e-13)
        np.testing.assert_allclose(g_loc[0].text, g_gat[0].text, atol=1e-13)

    def test_two_singleton_shards_lose_negatives(self):
        zv, zt = _unit_pairs(8, 2)
        shards = split_into_shards(zv, zt, np.arange(2), GatherTopology(2, 1))
        scale = LogitScale()
        l_loc, _ = infonce_local_only(shards, scale)
        l_gat, _ = infonce_gathered(shards, scale)
        assert l_loc == [0.0, 0.0]
        assert all(l > 0 for l in l_gat)

    def test_fewer_negatives_lower_loss(self):
        zv, zt = _unit_pairs(9, 16)
        shards = split_into_shards(zv, zt, np.arange(16), GatherTopology(4, 4))
        scale = LogitScale()
        l_loc, _ = infonce_local_only(shards, scale)
        l_gat, _ = infonce_gathered(shards, scale)
        assert np.mean(l_loc) < np.mean(l_gat)


class TestLogitScale:
    def test_clamp(self):
        s = LogitScale(log_scale=10.0, clamp_max=100.0)
        s.clamp()
        assert math.exp(s.log_scale) <= 100.0 + 1e-9

    def test_topology_validation(self):
        with pytest.raises(DimensionError):
            GatherTopology(0, 4)
