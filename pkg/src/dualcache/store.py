"""On-disk embedding containers and dataset loading.

The EMB1 container is bit-exact across platforms: a 32-byte header
(magic "EMB1", u32 version, u32 rows, u32 dim, u8 normalized flag,
15 reserved zero bytes) followed by rows*dim little-endian float32
values in row-major order. Labels live in a "LBL1" sidecar (magic,
u32 version, u32 count, then count u32 class indices) because OOD
test matrices carry no labels and reuse the same container.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    DualCacheError,
    InsufficientShots,
    NonFiniteValue,
    NormViolation,
    TruncatedFile,
    ZeroNormRow,
)

EMB1_MAGIC = b"EMB1"
LBL1_MAGIC = b"LBL1"
FORMAT_VERSION = 1
HEADER_SIZE = 32

# declared-normalized rows must have norms this close to 1
NORM_TOL = 1e-4


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense rows of float32 feature vectors.

    `normalized` asserts that every row has unit Euclidean norm; the
    flag is load-bearing (affinity math assumes unit self-similarity)
    and is re-verified when reading from disk.
    """

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected 2-D data, got ndim={arr.ndim}")
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def validate(self, where: str = "") -> None:
        """Check the finiteness and (if flagged) unit-norm invariants."""
        finite = np.isfinite(self.data).all(axis=1)
        if not finite.all():
            raise NonFiniteValue(int(np.argmin(finite)), where)
        if self.normalized and self.rows:
            norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
            off = np.abs(norms - 1.0) > NORM_TOL
            if off.any():
                bad = int(np.argmax(off))
                raise NormViolation(bad, float(norms[bad]), where)


@dataclass(frozen=True)
class LabeledEmbeddings:
    """Embeddings paired with class indices in [0, class_count)."""

    embeddings: EmbeddingMatrix
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.shape != (self.embeddings.rows,):
            raise DimensionMismatch(
                f"{labels.shape[0]} labels for {self.embeddings.rows} rows"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DimensionMismatch(
                f"label out of range [0, {self.class_count})"
            )


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered class names; line index in the vocab file = class index."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise DualCacheError("class names must be unique")

    @property
    def class_count(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class DatasetBundle:
    """Everything one experiment needs, already in embedding space.

    `ood_test` is an ordered list of (name, matrix) pairs, one per OOD
    dataset. `pos_text` / `neg_text` hold one C x dim matrix per prompt
    template; classifiers are averaged from them at engine-build time.
    """

    id_train: LabeledEmbeddings
    id_test: LabeledEmbeddings
    ood_test: tuple[tuple[str, EmbeddingMatrix], ...]
    vocab: ClassVocabulary
    pos_text: tuple[EmbeddingMatrix, ...] = field(default=())
    neg_text: tuple[EmbeddingMatrix, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "ood_test", tuple(self.ood_test))
        object.__setattr__(self, "pos_text", tuple(self.pos_text))
        object.__setattr__(self, "neg_text", tuple(self.neg_text))
        dim = self.id_train.embeddings.dim
        c = self.vocab.class_count
        if self.id_train.class_count != c or self.id_test.class_count != c:
            raise DimensionMismatch("train/test/vocab class counts disagree")
        for name, m in self.ood_test:
            if m.dim != dim:
                raise DimensionMismatch(f"OOD set {name}: dim {m.dim} != {dim}")
        if self.id_test.embeddings.dim != dim:
            raise DimensionMismatch("id_test dim differs from id_train")
        for kind, mats in (("pos_text", self.pos_text), ("neg_text", self.neg_text)):
            for m in mats:
                if m.dim != dim or m.rows != c:
                    raise DimensionMismatch(
                        f"{kind} template matrix must be {c} x {dim}, "
                        f"got {m.rows} x {m.dim}"
                    )


# --- EMB1 / LBL1 / vocabulary I/O ---

def save_embeddings(path: str | Path, m: EmbeddingMatrix) -> None:
    """Write an EMB1 file; the float payload round-trips bit-exactly."""
    header = EMB1_MAGIC + struct.pack(
        "<IIIB", FORMAT_VERSION, m.rows, m.dim, 1 if m.normalized else 0
    )
    header += b"\x00" * (HEADER_SIZE - len(header))
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_embeddings(path: str | Path, expected_dim: int | None = None) -> EmbeddingMatrix:
    """Read and validate an EMB1 file.

    Verifies the magic, version, payload length, finiteness, and (when
    the header says so) unit norms; every failure names the offending
    offset or row.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER_SIZE:
        raise TruncatedFile(path, HEADER_SIZE, len(blob))
    if blob[:4] != EMB1_MAGIC:
        raise BadMagic(path, bytes(blob[:4]))
    version, rows, dim, normalized = struct.unpack("<IIIB", blob[4:17])
    if version != FORMAT_VERSION:
        raise DualCacheError(f"{path}: unsupported EMB1 version {version}")
    expected = HEADER_SIZE + rows * dim * 4
    if len(blob) != expected:
        raise TruncatedFile(path, expected, len(blob))
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatch(f"{path}: dim {dim}, expected {expected_dim}")
    data = np.frombuffer(blob, dtype="<f4", offset=HEADER_SIZE).reshape(rows, dim)
    m = EmbeddingMatrix(data=data.copy(), normalized=bool(normalized))
    m.validate(where=str(path))
    return m


def save_labels(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    header = LBL1_MAGIC + struct.pack("<II", FORMAT_VERSION, len(labels))
    Path(path).write_bytes(header + labels.astype("<u4").tobytes())


def load_labels(path: str | Path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 12:
        raise TruncatedFile(path, 12, len(blob))
    if blob[:4] != LBL1_MAGIC:
        raise BadMagic(path, bytes(blob[:4]))
    version, count = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise DualCacheError(f"{path}: unsupported LBL1 version {version}")
    expected = 12 + count * 4
    if len(blob) != expected:
        raise TruncatedFile(path, expected, len(blob))
    return np.frombuffer(blob, dtype="<u4", offset=12).astype(np.int64)


def save_vocabulary(path: str | Path, vocab: ClassVocabulary) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in vocab.names), encoding="utf-8")


def load_vocabulary(path: str | Path) -> ClassVocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return ClassVocabulary(names=tuple(line for line in lines if line))


def load_labeled(emb_path: str | Path, label_path: str | Path,
                 class_count: int) -> LabeledEmbeddings:
    emb = load_embeddings(emb_path)
    labels = load_labels(label_path)
    return LabeledEmbeddings(embeddings=emb, labels=labels, class_count=class_count)


# --- core operations ---

def l2_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit Euclidean norm (direction preserved)."""
    norms = np.linalg.norm(m.data.astype(np.float64), axis=1)
    zero = norms == 0.0
    if zero.any():
        raise ZeroNormRow(int(np.argmax(zero)))
    out = (m.data / norms[:, None]).astype(np.float32)
    return EmbeddingMatrix(data=out, normalized=True)


def sample_shots(train: LabeledEmbeddings, k: int, seed: int) -> LabeledEmbeddings:
    """Draw exactly k shots per class, deterministically for a fixed seed.

    Each class gets its own child generator (SeedSequence spawn), so the
    selection within a class does not depend on the other classes. Rows
    come out class-major: class 0's k shots, then class 1's, ...
    """
    if k <= 0:
        raise DualCacheError(f"shot count must be positive, got {k}")
    c = train.class_count
    children = np.random.SeedSequence(seed).spawn(c)
    picks = []
    for cls in range(c):
        idx = np.flatnonzero(train.labels == cls)
        if len(idx) < k:
            raise InsufficientShots(cls, len(idx), k)
        rng = np.random.Generator(np.random.PCG64(children[cls]))
        picks.append(idx[rng.permutation(len(idx))[:k]])
    rows = np.concatenate(picks)
    emb = EmbeddingMatrix(
        data=train.embeddings.data[rows], normalized=train.embeddings.normalized
    )
    labels = np.repeat(np.arange(c, dtype=np.int64), k)
    return LabeledEmbeddings(embeddings=emb, labels=labels, class_count=c)
