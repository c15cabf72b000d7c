"""Key-value cache models over few-shot embeddings.

A cache stores channel-restricted, re-normalized shot features as keys
and the matching one-hot labels as values. Queries score against it by
an exponential affinity in the cosine similarity, and the cache-based
prediction is fused with zero-shot text logits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, DualCacheError
from .store import EmbeddingMatrix, LabeledEmbeddings, l2_normalize, load_embeddings, save_embeddings
from .channels import restrict_channels
from .textclf import TextClassifier


@dataclass(frozen=True)
class CacheModel:
    """C*K unit-norm keys and their one-hot labels.

    `labels` keeps the class indices so that aff @ onehot can run as a
    per-class segment sum when the rows are class-major regular, without
    touching the dense one-hot matrix.
    """

    keys: EmbeddingMatrix
    labels_onehot: np.ndarray
    labels: np.ndarray
    class_count: int
    shot_count: int

    def __post_init__(self):
        if self.keys.rows != self.labels_onehot.shape[0]:
            raise DimensionMismatch("keys and one-hot row counts differ")
        if self.labels_onehot.shape[1] != self.class_count:
            raise DimensionMismatch("one-hot width differs from class count")
        if self.keys.rows != self.class_count * self.shot_count:
            raise DimensionMismatch("cache must hold class_count * shot_count rows")

    @property
    def dim(self) -> int:
        return self.keys.dim

    @property
    def class_major(self) -> bool:
        expected = np.repeat(np.arange(self.class_count), self.shot_count)
        return bool(np.array_equal(self.labels, expected))

    def apply_labels(self, aff: np.ndarray) -> np.ndarray:
        """Compute aff @ onehot; rows may be a batch (..., C*K)."""
        if self.class_major:
            shape = aff.shape[:-1] + (self.class_count, self.shot_count)
            return aff.reshape(shape).sum(axis=-1)
        return aff @ self.labels_onehot.astype(aff.dtype)


def build_cache(shots: LabeledEmbeddings, idx) -> CacheModel:
    """Restrict the shots to a channel subset, re-normalize, one-hot the labels.

    Keys are re-normalized because the affinity treats 1 as the
    self-similarity ceiling, which only holds for unit vectors.
    """
    keys = l2_normalize(restrict_channels(shots.embeddings, idx))
    c = shots.class_count
    counts = np.bincount(shots.labels, minlength=c)
    if counts.size != c or not (counts == counts[0]).all() or counts[0] == 0:
        raise DualCacheError(
            f"cache needs the same shot count per class, got {counts.tolist()}"
        )
    k = int(counts[0])
    onehot = np.zeros((shots.embeddings.rows, c), dtype=np.float32)
    onehot[np.arange(shots.embeddings.rows), shots.labels] = 1.0
    return CacheModel(keys=keys, labels_onehot=onehot,
                      labels=shots.labels.copy(), class_count=c, shot_count=k)


def affinity(query: np.ndarray, cache: CacheModel, beta: float) -> np.ndarray:
    """exp(-beta * (1 - <query, key_j>)) for every cached key."""
    if beta < 0:
        raise DualCacheError(f"beta must be nonnegative, got {beta}")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (cache.dim,):
        raise DimensionMismatch(
            f"query dim {query.shape} vs cache dim {cache.dim}"
        )
    sims = cache.keys.data.astype(np.float64) @ query
    return np.exp(-beta * (1.0 - sims))


def zero_shot_logits(query: np.ndarray, classifier: TextClassifier) -> np.ndarray:
    """Inner products of the query with each class's text embedding."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (classifier.dim,):
        raise DimensionMismatch(
            f"query dim {query.shape} vs classifier dim {classifier.dim}"
        )
    return classifier.matrix.data.astype(np.float64) @ query


def fused_logits(zero_shot: np.ndarray, aff: np.ndarray, cache: CacheModel,
                 alpha: float) -> np.ndarray:
    """zero_shot + alpha * (aff @ onehot); linear in alpha."""
    zero_shot = np.asarray(zero_shot, dtype=np.float64)
    aff = np.asarray(aff, dtype=np.float64)
    if zero_shot.shape != (cache.class_count,):
        raise DimensionMismatch("zero-shot logits length differs from class count")
    if aff.shape != (cache.keys.rows,):
        raise DimensionMismatch("affinity length differs from cache rows")
    return zero_shot + alpha * cache.apply_labels(aff)


# --- serialization: two EMB1 files plus a small metadata text file ---

def partition_fingerprint(positive, negative) -> str:
    text = " ".join(map(str, positive)) + "|" + " ".join(map(str, negative))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_cache(prefix: str | Path, cache: CacheModel,
               partition_hash: str = "") -> None:
    prefix = str(prefix)
    save_embeddings(prefix + ".keys.emb", cache.keys)
    save_embeddings(
        prefix + ".onehot.emb",
        EmbeddingMatrix(data=cache.labels_onehot, normalized=False),
    )
    meta = (
        f"C={cache.class_count}\n"
        f"K={cache.shot_count}\n"
        f"Q={cache.dim}\n"
        f"partition={partition_hash}\n"
    )
    Path(prefix + ".meta.txt").write_text(meta, encoding="utf-8")


def load_cache(prefix: str | Path) -> CacheModel:
    prefix = str(prefix)
    keys = load_embeddings(prefix + ".keys.emb")
    onehot = load_embeddings(prefix + ".onehot.emb").data
    meta = dict(
        line.split("=", 1)
        for line in Path(prefix + ".meta.txt").read_text().splitlines()
        if "=" in line
    )
    labels = onehot.argmax(axis=1).astype(np.int64)
    return CacheModel(keys=keys, labels_onehot=onehot, labels=labels,
                      class_count=int(meta["C"]), shot_count=int(meta["K"]))
