"""Channel importance scoring and positive/negative partitioning.

Each embedding channel i gets an importance score F_i built from the
inter-class similarity S_i and inter-class variance V_i of the few-shot
class prototypes; the Q lowest-F channels become the positive subset
and the rest the negative subset.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DualCacheError,
    EmptyShots,
    IndexOutOfRange,
    OddDimension,
    SingleClass,
)
from .store import EmbeddingMatrix, LabeledEmbeddings

PAPER_LITERAL = "paper-literal"
VARIANCE_NEGATED = "variance-negated"


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel S_i, V_i and the combined importance F_i."""

    similarity: np.ndarray
    variance: np.ndarray
    importance: np.ndarray


@dataclass(frozen=True)
class ChannelPartition:
    """Disjoint, exhaustive split of channels 0..N-1; |positive| = q."""

    positive: tuple[int, ...]
    negative: tuple[int, ...]
    q: int

    def __post_init__(self):
        pos = tuple(int(i) for i in self.positive)
        neg = tuple(int(i) for i in self.negative)
        object.__setattr__(self, "positive", pos)
        object.__setattr__(self, "negative", neg)
        n = len(pos) + len(neg)
        if len(pos) != self.q:
            raise DualCacheError(f"|positive| = {len(pos)} but q = {self.q}")
        if set(pos) | set(neg) != set(range(n)) or set(pos) & set(neg):
            raise DualCacheError("partition must be disjoint and exhaustive")

    @property
    def dim(self) -> int:
        return len(self.positive) + len(self.negative)


@dataclass(frozen=True)
class SelectorConfig:
    """Knobs for the importance criterion.

    `lam` weighs similarity against variance. The criterion as printed
    (lam*S + (1-lam)*V, pick smallest) penalizes high variance, which
    contradicts the stated goal of maximizing inter-class variance, so
    the default negates the variance term; the literal form stays
    available for faithful reproduction.
    """

    lam: float = 0.5
    q: int | None = None  # None -> floor(N / 2)
    criterion_mode: str = VARIANCE_NEGATED

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise DualCacheError(f"lambda must be in [0, 1], got {self.lam}")
        if self.criterion_mode not in (PAPER_LITERAL, VARIANCE_NEGATED):
            raise DualCacheError(f"unknown criterion mode {self.criterion_mode!r}")

    def resolve_q(self, dim: int) -> int:
        q = dim // 2 if self.q is None else self.q
        if not 0 < q < dim:
            raise DualCacheError(f"q must satisfy 0 < q < {dim}, got {q}")
        return q


def compute_channel_stats(shots: LabeledEmbeddings,
                          cfg: SelectorConfig = SelectorConfig()) -> ChannelStats:
    """Score channels from class prototypes of the (unit-norm) shots.

    Prototype p[c, i] is the mean of class c's shots on channel i.
    S_i averages p[c, i] * p[c', i] over unordered class pairs; V_i is
    the across-class variance of the prototypes on channel i.
    """
    if shots.embeddings.rows == 0:
        raise EmptyShots("no shots given")
    c = shots.class_count
    if c < 2:
        raise SingleClass(f"need at least 2 classes, got {c}")
    data = shots.embeddings.data.astype(np.float64)
    protos = np.empty((c, shots.embeddings.dim))
    for cls in range(c):
        idx = np.flatnonzero(shots.labels == cls)
        if len(idx) == 0:
            raise EmptyShots(f"class {cls} has no shots")
        protos[cls] = data[idx].mean(axis=0)

    # sum over unordered pairs c<c' of p_c*p_c' equals (sum^2 - sum of squares)/2
    total = protos.sum(axis=0)
    similarity = (total * total - (protos * protos).sum(axis=0)) / (c * (c - 1))
    variance = protos.var(axis=0)

    if cfg.criterion_mode == PAPER_LITERAL:
        importance = cfg.lam * similarity + (1.0 - cfg.lam) * variance
    else:
        importance = cfg.lam * similarity - (1.0 - cfg.lam) * variance
    return ChannelStats(similarity=similarity, variance=variance,
                        importance=importance)


def partition_channels(stats: ChannelStats,
                       cfg: SelectorConfig = SelectorConfig()) -> ChannelPartition:
    """Split channels: the q smallest-F indices (ties -> smaller index)
    form the positive subset, the remainder the negative subset."""
    f = np.asarray(stats.importance)
    q = cfg.resolve_q(len(f))
    order = np.argsort(f, kind="stable")
    positive = np.sort(order[:q])
    negative = np.sort(order[q:])
    return ChannelPartition(positive=tuple(positive), negative=tuple(negative), q=q)


def restrict_channels(m: EmbeddingMatrix, idx) -> EmbeddingMatrix:
    """Column-subset a matrix; clears the normalized flag because
    dropping channels breaks unit norms."""
    idx = np.asarray(list(idx), dtype=np.int64)
    bad = (idx < 0) | (idx >= m.dim)
    if bad.any():
        raise IndexOutOfRange(int(idx[bad][0]), m.dim)
    return EmbeddingMatrix(data=m.data[:, idx], normalized=False)


def avg_pool_pairs(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Average adjacent channel pairs, halving the dimension."""
    if m.dim % 2 != 0:
        raise OddDimension(m.dim)
    pooled = (m.data[:, 0::2] + m.data[:, 1::2]) / 2.0
    return EmbeddingMatrix(data=pooled, normalized=False)


# --- partition text format: "Q=<q>", positive indices, negative indices ---

def save_partition(path: str | Path, part: ChannelPartition) -> None:
    lines = [
        f"Q={part.q}",
        " ".join(str(i) for i in part.positive),
        " ".join(str(i) for i in part.negative),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_partition(path: str | Path) -> ChannelPartition:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 3 or not lines[0].startswith("Q="):
        raise DualCacheError(f"{path}: malformed partition file")
    q = int(lines[0][2:])
    positive = tuple(int(t) for t in lines[1].split())
    negative = tuple(int(t) for t in lines[2].split())
    return ChannelPartition(positive=positive, negative=negative, q=q)
