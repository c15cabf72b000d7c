"""Positive/negative adapters, dual fusion, and the MCM baseline score.

A DualEngine bundles two cache models (positive and negative channel
subsets of the same shots), their matching restricted text classifiers,
and a full-dimension classifier for the MCM baseline. Scoring restricts
or pools the test feature per adapter, fuses zero-shot and cache logits,
concatenates the two adapters' logits, and softmaxes at temperature tau.
Higher ood_score means more ID-like in every mode.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, DualCacheError
from .store import EmbeddingMatrix, LabeledEmbeddings, l2_normalize
from .channels import ChannelPartition, avg_pool_pairs, restrict_channels
from .cache import CacheModel, build_cache
from .textclf import TextClassifier, build_classifier

MODES = ("positive-only", "negative-only", "dual", "mcm-baseline")
POOLINGS = ("restrict", "avgpool")

# queries are scored in fixed-size blocks so BLAS always sees the same
# shapes; thread count then cannot change the numeric results
SCORE_CHUNK = 256


@dataclass(frozen=True)
class AdapterConfig:
    """Scoring hyperparameters; sweep ranges default to alpha, beta in
    [0, 30] and tau in [0.03, 10], but these are search defaults, not
    hard limits."""

    alpha: float = 1.0
    beta: float = 1.0
    tau: float = 1.0
    mode: str = "dual"
    pooling: str = "restrict"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise DualCacheError("alpha and beta must be nonnegative")
        if self.tau <= 0:
            raise DualCacheError(f"tau must be positive, got {self.tau}")
        if self.mode not in MODES:
            raise DualCacheError(f"unknown mode {self.mode!r}")
        if self.pooling not in POOLINGS:
            raise DualCacheError(f"unknown pooling {self.pooling!r}")


@dataclass(frozen=True)
class DualEngine:
    """Immutable assembly of caches, classifiers, partition, and config."""

    positive_cache: CacheModel
    negative_cache: CacheModel
    positive_classifier: TextClassifier
    negative_classifier: TextClassifier
    baseline_classifier: TextClassifier  # full-dim, for the MCM baseline
    partition: ChannelPartition
    config: AdapterConfig

    def __post_init__(self):
        if not (self.positive_cache.dim == len(self.partition.positive)
                == self.positive_classifier.dim):
            raise DimensionMismatch("positive cache/classifier/partition dims differ")
        if not (self.negative_cache.dim == len(self.partition.negative)
                == self.negative_classifier.dim):
            raise DimensionMismatch("negative cache/classifier/partition dims differ")
        if self.config.pooling == "avgpool" and (
                len(self.partition.positive) != len(self.partition.negative)):
            raise DimensionMismatch(
                "avgpool needs an even split so the pooled feature fits both sides"
            )

    @property
    def dim(self) -> int:
        return self.partition.dim

    @property
    def class_count(self) -> int:
        return self.positive_cache.class_count

    def with_config(self, config: AdapterConfig) -> "DualEngine":
        return replace(self, config=config)


@dataclass(frozen=True)
class ScoreRecord:
    """Per-sample verdict: score, class guess, and all three logit views."""

    ood_score: float
    predicted_class: int
    positive_logits: np.ndarray
    negative_logits: np.ndarray
    dual_probabilities: np.ndarray


@dataclass(frozen=True)
class BatchScores:
    ood_scores: np.ndarray
    predicted: np.ndarray
    positive_logits: np.ndarray
    negative_logits: np.ndarray
    dual_probabilities: np.ndarray

    def record(self, i: int) -> ScoreRecord:
        return ScoreRecord(
            ood_score=float(self.ood_scores[i]),
            predicted_class=int(self.predicted[i]),
            positive_logits=self.positive_logits[i],
            negative_logits=self.negative_logits[i],
            dual_probabilities=self.dual_probabilities[i],
        )


def build_engine(shots: LabeledEmbeddings, pos_templates, neg_templates,
                 partition: ChannelPartition, config: AdapterConfig) -> DualEngine:
    """Assemble both adapters from one shot set and one channel partition."""
    full = tuple(range(partition.dim))
    return DualEngine(
        positive_cache=build_cache(shots, partition.positive),
        negative_cache=build_cache(shots, partition.negative),
        positive_classifier=build_classifier(
            pos_templates, partition.positive, polarity="positive"),
        negative_classifier=build_classifier(
            neg_templates, partition.negative, polarity="negative"),
        baseline_classifier=build_classifier(
            pos_templates, full, polarity="positive"),
        partition=partition,
        config=config,
    )


def softmax(logits: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """Temperature softmax along the last axis, max-subtracted for
    overflow safety."""
    if tau <= 0:
        raise DualCacheError(f"tau must be positive, got {tau}")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def dual_fuse(p_pos: np.ndarray, p_neg: np.ndarray, tau: float) -> np.ndarray:
    """Softmax over the concatenation [p_pos, p_neg] at temperature tau."""
    return softmax(np.concatenate([p_pos, p_neg], axis=-1), tau)


def mcm_score(f: np.ndarray, classifier: TextClassifier, tau: float) -> float:
    """Maximum softmax probability of the query/text cosine similarities."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (classifier.dim,):
        raise DimensionMismatch(f"query dim {f.shape} vs classifier dim {classifier.dim}")
    sims = classifier.matrix.data.astype(np.float64) @ f
    return float(softmax(sims, tau).max())


def _prepare_queries(engine: DualEngine, data: np.ndarray):
    """Restrict or pool a (B, N) query block to each adapter's subspace,
    re-normalized. avgpool shares one pooled vector across both sides."""
    m = EmbeddingMatrix(data=data.astype(np.float32), normalized=False)
    if engine.config.pooling == "avgpool":
        pooled = l2_normalize(avg_pool_pairs(m)).data.astype(np.float64)
        return pooled, pooled
    pos = l2_normalize(restrict_channels(m, engine.partition.positive))
    neg = l2_normalize(restrict_channels(m, engine.partition.negative))
    return pos.data.astype(np.float64), neg.data.astype(np.float64)


def _adapter_logits(queries: np.ndarray, cache: CacheModel,
                    classifier: TextClassifier, alpha: float,
                    beta: float) -> np.ndarray:
    zs = queries @ classifier.matrix.data.astype(np.float64).T
    aff = np.exp(-beta * (1.0 - queries @ cache.keys.data.astype(np.float64).T))
    return zs + alpha * cache.apply_labels(aff)


def _score_block(engine: DualEngine, data: np.ndarray) -> BatchScores:
    cfg = engine.config
    q_pos, q_neg = _prepare_queries(engine, data)
    p_pos = _adapter_logits(q_pos, engine.positive_cache,
                            engine.positive_classifier, cfg.alpha, cfg.beta)
    p_neg = _adapter_logits(q_neg, engine.negative_cache,
                            engine.negative_classifier, cfg.alpha, cfg.beta)
    dual = dual_fuse(p_pos, p_neg, cfg.tau)
    c = engine.class_count

    if cfg.mode == "dual":
        ood = dual[:, :c].max(axis=1)
        pred = dual[:, :c].argmax(axis=1)
    elif cfg.mode == "positive-only":
        ood = softmax(p_pos, cfg.tau).max(axis=1)
        pred = p_pos.argmax(axis=1)
    elif cfg.mode == "negative-only":
        # low not-belonging evidence for some class reads as ID
        ood = softmax(-p_neg, cfg.tau).max(axis=1)
        pred = p_neg.argmin(axis=1)
    else:  # mcm-baseline: full-dim feature against the unrestricted classifier
        sims = data.astype(np.float64) @ engine.baseline_classifier.matrix.data.astype(np.float64).T
        ood = softmax(sims, cfg.tau).max(axis=1)
        pred = sims.argmax(axis=1)

    return BatchScores(ood_scores=ood, predicted=pred.astype(np.int64),
                       positive_logits=p_pos, negative_logits=p_neg,
                       dual_probabilities=dual)


def score_batch(engine: DualEngine, m: EmbeddingMatrix,
                threads: int = 1) -> BatchScores:
    """Score every row of m; results are identical for any thread count.

    The matrix is cut into fixed SCORE_CHUNK-row blocks regardless of
    `threads`, so the same kernels run on the same shapes; threads only
    schedule those identical blocks.
    """
    if m.dim != engine.dim:
        raise DimensionMismatch(f"query dim {m.dim} vs engine dim {engine.dim}")
    if m.rows == 0:
        raise DualCacheError("cannot score an empty matrix")
    blocks = [m.data[i:i + SCORE_CHUNK] for i in range(0, m.rows, SCORE_CHUNK)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _score_block(engine, b), blocks))
    else:
        parts = [_score_block(engine, b) for b in blocks]
    return BatchScores(
        ood_scores=np.concatenate([p.ood_scores for p in parts]),
        predicted=np.concatenate([p.predicted for p in parts]),
        positive_logits=np.concatenate([p.positive_logits for p in parts]),
        negative_logits=np.concatenate([p.negative_logits for p in parts]),
        dual_probabilities=np.concatenate([p.dual_probabilities for p in parts]),
    )


def positive_logits(engine: DualEngine, f: np.ndarray) -> np.ndarray:
    """Positive-adapter logits for one unit-norm full-dimension feature."""
    f = _as_query(engine, f)
    q_pos, _ = _prepare_queries(engine, f[None, :])
    return _adapter_logits(q_pos, engine.positive_cache,
                           engine.positive_classifier,
                           engine.config.alpha, engine.config.beta)[0]


def negative_logits(engine: DualEngine, f: np.ndarray) -> np.ndarray:
    """Negative-adapter logits for one unit-norm full-dimension feature."""
    f = _as_query(engine, f)
    _, q_neg = _prepare_queries(engine, f[None, :])
    return _adapter_logits(q_neg, engine.negative_cache,
                           engine.negative_classifier,
                           engine.config.alpha, engine.config.beta)[0]


def score_sample(engine: DualEngine, f: np.ndarray) -> ScoreRecord:
    """Full verdict for one unit-norm feature vector."""
    f = _as_query(engine, f)
    return _score_block(engine, f[None, :]).record(0)


def _as_query(engine: DualEngine, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (engine.dim,):
        raise DimensionMismatch(f"query shape {f.shape} vs engine dim {engine.dim}")
    return f
