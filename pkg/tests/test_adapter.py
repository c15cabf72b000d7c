import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualcache import (
    AdapterConfig,
    DimensionMismatch,
    DualCacheError,
    EmbeddingMatrix,
    LabeledEmbeddings,
    SelectorConfig,
    build_engine,
    compute_channel_stats,
    dual_fuse,
    l2_normalize,
    mcm_score,
    negative_logits,
    partition_channels,
    positive_logits,
    score_batch,
    score_sample,
    softmax,
)
from dualcache.channels import ChannelPartition
from dualcache.textclf import TextClassifier

import naive
from fixtures import tiny_instance


def engine_from_instance(inst, mode="dual"):
    shots = LabeledEmbeddings(
        l2_normalize(EmbeddingMatrix(inst["shots_raw"].astype(np.float32))),
        inst["labels"], inst["c"])
    sel = SelectorConfig(lam=inst["lam"], q=inst["q"],
                         criterion_mode=inst["criterion"])
    partition = partition_channels(compute_channel_stats(shots, sel), sel)
    cfg = AdapterConfig(alpha=inst["alpha"], beta=inst["beta"], tau=inst["tau"],
                        mode=mode, pooling=inst["pooling"])
    pos_t = [EmbeddingMatrix(t.astype(np.float32)) for t in inst["pos_templates"]]
    neg_t = [EmbeddingMatrix(t.astype(np.float32)) for t in inst["neg_templates"]]
    return build_engine(shots, pos_t, neg_t, partition, cfg), shots, partition


def naive_from_instance(inst, partition, mode):
    shots32 = inst["shots_raw"].astype(np.float32).tolist()
    pos_t32 = [t.astype(np.float32).tolist() for t in inst["pos_templates"]]
    neg_t32 = [t.astype(np.float32).tolist() for t in inst["neg_templates"]]
    return naive.score_sample(
        inst["f"].tolist(), shots32, inst["labels"].tolist(), inst["c"],
        list(partition.positive), list(partition.negative),
        pos_t32, neg_t32, inst["alpha"], inst["beta"], inst["tau"],
        mode, inst["pooling"])


class TestDualFuse:
    def test_symmetric_single_logits(self):
        out = dual_fuse(np.array([0.0]), np.array([0.0]), tau=1.0)
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_frozen_example(self):
        out = dual_fuse(np.array([2.0, 0.0]), np.array([0.0, 0.0]), tau=1.0)
        np.testing.assert_allclose(
            out,
            [0.7112345942275938, 0.09625513525746872,
             0.09625513525746872, 0.09625513525746872],
            atol=1e-12)

    def test_sums_to_one_and_argmax_stable(self):
        rng = np.random.default_rng(0)
        for tau in (0.03, 1.0, 10.0):
            p = rng.standard_normal(5)
            n = rng.standard_normal(5)
            out = dual_fuse(p, n, tau)
            assert out.sum() == pytest.approx(1.0, abs=1e-6)
            assert out.argmax() == np.concatenate([p, n]).argmax()

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        p = rng.standard_normal(4)
        n = rng.standard_normal(4)
        a = dual_fuse(p, n, tau=0.7)
        b = dual_fuse(p + 123.4, n + 123.4, tau=0.7)
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_overflow_safe(self):
        out = dual_fuse(np.array([1e4, 0.0]), np.array([-1e4, 0.0]), tau=0.03)
        assert np.isfinite(out).all()
        assert out.sum() == pytest.approx(1.0)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=8),
        st.lists(st.floats(-50, 50), min_size=1, max_size=8),
        st.sampled_from([0.03, 0.3, 1.0, 10.0]),
        st.floats(-100, 100),
    )
    def test_fusion_properties(self, pos, neg, tau, shift):
        pos, neg = np.array(pos), np.array(neg[: len(pos)] or [0.0])
        out = dual_fuse(pos, neg, tau)
        assert out.sum() == pytest.approx(1.0, abs=1e-6)
        assert (out >= 0).all()
        shifted = dual_fuse(pos + shift, neg + shift, tau)
        np.testing.assert_allclose(shifted, out, atol=1e-6)


class TestMcmScore:
    def unit_clf(self, rows):
        return TextClassifier(matrix=EmbeddingMatrix(
            np.asarray(rows, np.float32), normalized=True))

    def test_single_class_always_one(self):
        clf = self.unit_clf([[1.0, 0.0]])
        assert mcm_score(np.array([0.0, 1.0]), clf, tau=1.0) == pytest.approx(1.0)

    def test_sharp_temperature(self):
        clf = self.unit_clf([[1, 0], [0, 1]])
        assert mcm_score(np.array([1.0, 0.0]), clf, tau=1e-3) == pytest.approx(1.0)

    def test_frozen_value(self):
        clf = self.unit_clf([[1, 0], [0, 1]])
        # sims (1, 0) at tau=1 -> e / (e + 1)
        assert mcm_score(np.array([1.0, 0.0]), clf, tau=1.0) == pytest.approx(
            0.7310585786300049, abs=1e-12)


def two_class_engine(alpha=1.0, beta=2.0, tau=1.0, mode="dual"):
    """Tiny hand-checkable engine: N=4, Q=2; each shot restricts to a
    basis vector on both the positive and the negative side."""
    shots = LabeledEmbeddings(
        EmbeddingMatrix(np.array([
            [0.8, 0.0, 0.6, 0.0],
            [0.0, 0.8, 0.0, 0.6],
        ], np.float32), normalized=True),
        np.array([0, 1]), 2)
    partition = ChannelPartition(positive=(0, 1), negative=(2, 3), q=2)
    pos_t = [EmbeddingMatrix(np.array([[1, 0, 0, 0], [0, 1, 0, 0]], np.float32))]
    neg_t = [EmbeddingMatrix(np.array([[0, 0, 1, 0], [0, 0, 0, 1]], np.float32))]
    cfg = AdapterConfig(alpha=alpha, beta=beta, tau=tau, mode=mode)
    return build_engine(shots, pos_t, neg_t, partition, cfg)


class TestAdapterLogits:
    def test_alpha_zero_equals_restricted_zero_shot(self):
        engine = two_class_engine(alpha=0.0)
        f = np.array([0.6, 0.0, 0.0, 0.8])
        out = positive_logits(engine, f)
        # restricted positive feature renormalizes (0.6, 0) to (1, 0)
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-7)

    def test_beta_zero_adds_k(self):
        rng = np.random.default_rng(2)
        engine = two_class_engine(alpha=1.0, beta=0.0)
        f = rng.standard_normal(4)
        f /= np.linalg.norm(f)
        zs = positive_logits(engine.with_config(
            AdapterConfig(alpha=0.0, beta=0.0)), f)
        full = positive_logits(engine, f)
        np.testing.assert_allclose(full, zs + 1.0, atol=1e-7)  # K = 1

    def test_negative_orthogonal_zero(self):
        engine = two_class_engine(alpha=0.0)
        # negative channels (2, 3) of f are (1, 0); negative classifier
        # rows on those channels are e3, e4 -> logits (1, 0)
        f = np.array([0.0, 0.6, 0.8, 0.0])
        out = negative_logits(engine, f)
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-7)

    def test_cached_shot_dominates_with_large_beta(self):
        # C=3, K=1: the query equals class 1's shot; its affinity is 1,
        # the other keys decay exponentially
        rng = np.random.default_rng(3)
        raw = rng.standard_normal((3, 6))
        shots = LabeledEmbeddings(
            l2_normalize(EmbeddingMatrix(raw.astype(np.float32))),
            np.arange(3), 3)
        sel = SelectorConfig(q=3)
        partition = partition_channels(compute_channel_stats(shots, sel), sel)
        templates = [EmbeddingMatrix(rng.standard_normal((3, 6)).astype(np.float32))]
        cfg = AdapterConfig(alpha=1.0, beta=50.0, tau=1.0)
        engine = build_engine(shots, templates, templates, partition, cfg)

        f = shots.embeddings.data[1].astype(np.float64)
        with_cache = positive_logits(engine, f)
        without = positive_logits(engine.with_config(
            AdapterConfig(alpha=0.0, beta=50.0)), f)
        cache_term = with_cache - without
        assert cache_term.argmax() == 1
        assert cache_term[1] == pytest.approx(1.0, abs=1e-6)
        assert np.all(cache_term[[0, 2]] < 0.5)


class TestScoreSample:
    def test_single_class_dual_is_sigmoid(self):
        shots = LabeledEmbeddings(
            EmbeddingMatrix(np.array([[0.8, 0.6]], np.float32), normalized=True),
            np.array([0]), 1)
        partition = ChannelPartition(positive=(0,), negative=(1,), q=1)
        t = [EmbeddingMatrix(np.array([[1.0, 0.0]], np.float32))]
        tn = [EmbeddingMatrix(np.array([[0.0, 1.0]], np.float32))]
        cfg = AdapterConfig(alpha=0.5, beta=2.0, tau=0.8)
        engine = build_engine(shots, t, tn, partition, cfg)
        f = np.array([0.8, 0.6])
        rec = score_sample(engine, f)
        p_pos = positive_logits(engine, f)[0]
        p_neg = negative_logits(engine, f)[0]
        expect = 1.0 / (1.0 + np.exp(-(p_pos - p_neg) / 0.8))
        assert rec.ood_score == pytest.approx(expect, abs=1e-9)

    def test_pos_much_larger_gives_id_verdict(self):
        engine = two_class_engine(alpha=0.0, tau=0.05)
        # peaked on the positive side, flat on the negative side
        f = np.array([0.99, 0.0, 0.1, 0.1])
        f /= np.linalg.norm(f)
        rec = score_sample(engine, f)
        assert rec.ood_score > 0.95

    def test_balanced_logits_give_ood_verdict(self):
        engine = two_class_engine(alpha=0.0, tau=1.0)
        f = np.array([0.5, 0.5, 0.5, 0.5]) / np.linalg.norm([0.5] * 4)
        rec = score_sample(engine, f)
        # mass spreads over all four entries; positive-half max is small
        assert rec.ood_score < 0.5

    def test_dual_probabilities_invariants(self):
        rng = np.random.default_rng(4)
        inst = tiny_instance(rng)
        engine, _, _ = engine_from_instance(inst)
        rec = score_sample(engine, inst["f"])
        assert rec.dual_probabilities.sum() == pytest.approx(1.0, abs=1e-6)
        assert rec.ood_score == pytest.approx(
            rec.dual_probabilities[:inst["c"]].max(), abs=1e-12)

    def test_mode_consistency_masked_negative(self):
        rng = np.random.default_rng(5)
        inst = tiny_instance(rng)
        engine, _, _ = engine_from_instance(inst)
        p_pos = positive_logits(engine, inst["f"])
        tau = inst["tau"]
        masked = dual_fuse(p_pos, np.full(inst["c"], -1e9), tau)
        dual_ood = masked[:inst["c"]].max()
        mcm_over_pos = softmax(p_pos, tau).max()
        assert dual_ood == pytest.approx(mcm_over_pos, abs=1e-6)

    def test_dim_mismatch(self):
        engine = two_class_engine()
        with pytest.raises(DimensionMismatch):
            score_sample(engine, np.ones(5))


class TestOracleEquivalence:
    def test_tiny_instances_all_modes(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            inst = tiny_instance(rng)
            for mode in ("dual", "positive-only", "negative-only", "mcm-baseline"):
                engine, _, partition = engine_from_instance(inst, mode)
                rec = score_sample(engine, inst["f"])
                want = naive_from_instance(inst, partition, mode)
                np.testing.assert_allclose(rec.positive_logits, want["p_pos"],
                                           atol=1e-6)
                np.testing.assert_allclose(rec.negative_logits, want["p_neg"],
                                           atol=1e-6)
                np.testing.assert_allclose(rec.dual_probabilities, want["dual"],
                                           atol=1e-6)
                assert rec.ood_score == pytest.approx(want["ood_score"], abs=1e-6)
                assert rec.predicted_class == want["predicted"]


class TestBatchScoring:
    def test_batch_matches_per_sample(self):
        rng = np.random.default_rng(6)
        inst = tiny_instance(rng)
        engine, _, _ = engine_from_instance(inst)
        queries = rng.standard_normal((40, inst["n"]))
        queries /= np.linalg.norm(queries, axis=1, keepdims=True)
        m = EmbeddingMatrix(queries.astype(np.float32), normalized=True)
        batch = score_batch(engine, m)
        for i in range(0, 40, 7):
            rec = score_sample(engine, m.data[i].astype(np.float64))
            assert batch.ood_scores[i] == pytest.approx(rec.ood_score, abs=1e-9)
            assert batch.predicted[i] == rec.predicted_class

    def test_threads_do_not_change_results(self):
        rng = np.random.default_rng(7)
        inst = tiny_instance(rng)
        engine, _, _ = engine_from_instance(inst)
        queries = rng.standard_normal((600, inst["n"]))  # multiple chunks
        queries /= np.linalg.norm(queries, axis=1, keepdims=True)
        m = EmbeddingMatrix(queries.astype(np.float32), normalized=True)
        serial = score_batch(engine, m, threads=1)
        threaded = score_batch(engine, m, threads=4)
        np.testing.assert_array_equal(serial.ood_scores, threaded.ood_scores)
        np.testing.assert_array_equal(serial.dual_probabilities,
                                      threaded.dual_probabilities)

    def test_empty_matrix_rejected(self):
        engine = two_class_engine()
        with pytest.raises(DualCacheError):
            score_batch(engine, EmbeddingMatrix(np.empty((0, 4), np.float32)))


class TestEngineValidation:
    def test_avgpool_needs_even_split(self):
        shots = LabeledEmbeddings(
            EmbeddingMatrix(np.array([
                [0.8, 0.6, 0.0, 0.0],
                [0.6, 0.0, 0.8, 0.0],
            ], np.float32), normalized=True),
            np.array([0, 1]), 2)
        partition = ChannelPartition(positive=(0,), negative=(1, 2, 3), q=1)
        t = [EmbeddingMatrix(np.ones((2, 4), np.float32))]
        with pytest.raises(DimensionMismatch):
            build_engine(shots, t, t, partition,
                         AdapterConfig(pooling="avgpool"))

    def test_config_validation(self):
        with pytest.raises(DualCacheError):
            AdapterConfig(tau=0.0)
        with pytest.raises(DualCacheError):
            AdapterConfig(alpha=-1.0)
        with pytest.raises(DualCacheError):
            AdapterConfig(mode="bogus")
