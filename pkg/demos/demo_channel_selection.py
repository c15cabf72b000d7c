#!/usr/bin/env python3
# Score channels by the importance criterion and split them into the
# positive (class-bearing) and negative (background) subsets.
import numpy as np

from dualcache import (
    EmbeddingMatrix, LabeledEmbeddings, SelectorConfig, l2_normalize,
    compute_channel_stats, partition_channels, restrict_channels,
)

rng = np.random.default_rng(1)
C, K, N = 3, 8, 12

# channels 0..2 carry the class signal, 6..11 carry a shared background,
# the rest is noise
centers = np.zeros((C, N))
centers[0, 0] = centers[1, 1] = centers[2, 2] = 1.0
centers[:, 6:] = 0.4 / np.sqrt(6)

rows = np.concatenate([
    centers[c] + 0.1 * rng.standard_normal((K, N)) for c in range(C)
]).astype(np.float32)
shots = LabeledEmbeddings(l2_normalize(EmbeddingMatrix(rows)),
                          np.repeat(np.arange(C), K), C)

cfg = SelectorConfig(lam=0.5)  # default: variance term negated
stats = compute_channel_stats(shots, cfg)

print(" ch   similarity    variance  importance")
for i in range(N):
    print(f"{i:3d} {stats.similarity[i]:12.5f} {stats.variance[i]:11.5f}"
          f" {stats.importance[i]:11.5f}")

part = partition_channels(stats, cfg)
print("\npositive channels:", part.positive)
print("negative channels:", part.negative)

# the class-bearing channels should land on the positive side
assert set(range(C)) <= set(part.positive)

pos_view = restrict_channels(shots.embeddings, part.positive)
neg_view = restrict_channels(shots.embeddings, part.negative)
print("positive view:", pos_view.rows, "x", pos_view.dim,
      "| negative view:", neg_view.rows, "x", neg_view.dim)

# the literal criterion (variance added, not subtracted) flips which
# channels look "influential"
lit = compute_channel_stats(shots, SelectorConfig(criterion_mode="paper-literal"))
lit_part = partition_channels(lit, SelectorConfig(criterion_mode="paper-literal"))
print("literal-criterion positive channels:", lit_part.positive)
