#!/usr/bin/env python3
# Round-trip the binary embedding container and sample a few-shot subset.
import tempfile
from pathlib import Path

import numpy as np

from dualcache import (
    EmbeddingMatrix, LabeledEmbeddings, l2_normalize,
    load_embeddings, load_labels, sample_shots,
    save_embeddings, save_labels,
)

rng = np.random.default_rng(0)
work = Path(tempfile.mkdtemp(prefix="dualcache_demo_"))

# 60 random 8-dim vectors, 3 classes, 20 per class
raw = rng.standard_normal((60, 8)).astype(np.float32)
labels = np.repeat(np.arange(3), 20)

m = l2_normalize(EmbeddingMatrix(raw))
print("normalized matrix:", m.rows, "x", m.dim, "| row norms:",
      np.linalg.norm(m.data[:3], axis=1))

save_embeddings(work / "pool.emb", m)
save_labels(work / "pool.lbl", labels)
back = load_embeddings(work / "pool.emb")
print("round trip bit-identical:", back.data.tobytes() == m.data.tobytes())
print("labels round trip:", np.array_equal(load_labels(work / "pool.lbl"), labels))

pool = LabeledEmbeddings(back, labels, 3)
shots = sample_shots(pool, k=4, seed=42)
print("sampled", shots.embeddings.rows, "shots, labels:", shots.labels.tolist())

again = sample_shots(pool, k=4, seed=42)
print("same seed, same selection:",
      np.array_equal(shots.embeddings.data, again.embeddings.data))

other = sample_shots(pool, k=4, seed=43)
print("different seed, different selection:",
      not np.array_equal(shots.embeddings.data, other.embeddings.data))
