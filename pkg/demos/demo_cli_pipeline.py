#!/usr/bin/env python3
# Drive the CLI end to end: write a dataset to disk, author a manifest,
# then validate / select channels / evaluate / sweep from the shell.
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from dualcache import (
    ClassVocabulary, EmbeddingMatrix, save_embeddings, save_labels,
    save_vocabulary,
)

rng = np.random.default_rng(5)
C, N = 2, 16
work = Path(tempfile.mkdtemp(prefix="dualcache_cli_"))
print("working in", work)

e = np.zeros((C, N)); e[0, 0] = e[1, 1] = 1.0
g = np.zeros(N); g[8:] = 1 / np.sqrt(8)
u = np.zeros(N); u[2:8] = 1 / np.sqrt(6)

def id_rows(cls, n):
    return (e[cls] + 0.25 * g + 0.13 * rng.standard_normal((n, N))).astype(np.float32)

save_embeddings(work / "train.emb", EmbeddingMatrix(
    np.concatenate([id_rows(c, 40) for c in range(C)])))
save_labels(work / "train.lbl", np.repeat(np.arange(C), 40))
save_embeddings(work / "test.emb", EmbeddingMatrix(
    np.concatenate([id_rows(c, 100) for c in range(C)])))
save_labels(work / "test.lbl", np.repeat(np.arange(C), 100))
save_embeddings(work / "ood.emb", EmbeddingMatrix(
    (0.65 * e[0] + 0.3 * u + 0.9 * g + 0.13 * rng.standard_normal((200, N))).astype(np.float32)))
save_vocabulary(work / "classes.txt", ClassVocabulary(("class0", "class1")))
save_embeddings(work / "pos.t0.text.emb", EmbeddingMatrix(
    (e + 0.02 * rng.standard_normal((C, N))).astype(np.float32)))
save_embeddings(work / "neg.n0.text.emb", EmbeddingMatrix(
    (g + 0.15 * e + 0.02 * rng.standard_normal((C, N))).astype(np.float32)))

(work / "run.ini").write_text("""\
[data]
id_train = train.emb
id_train_labels = train.lbl
id_test = test.emb
id_test_labels = test.lbl
vocab = classes.txt
ood = near:ood.emb
pos_text = t0:pos.t0.text.emb
neg_text = n0:neg.n0.text.emb
normalize = true

[selector]
lambda = 0.5

[adapter]
alpha = 0.3
beta = 1.0
tau = 1.0
mode = dual

[protocol]
shots = 16
seeds = 0, 1, 2

[sweep]
alphas = 0.1, 0.3, 1.0
betas = 1.0, 3.0
taus = 1.0
lambdas = 0.5
objective = auroc
tuning = paper-faithful-test

[output]
dir = out
""")

def run(*args):
    print("\n$ dualcache", " ".join(args))
    proc = subprocess.run([sys.executable, "-m", "dualcache", *args],
                          capture_output=True, text=True)
    sys.stdout.write(proc.stdout)
    sys.stderr.write(proc.stderr)
    if proc.returncode != 0:
        raise SystemExit(proc.returncode)

manifest = str(work / "run.ini")
run("validate", "--manifest", manifest)
run("select-channels", "--manifest", manifest)
run("build-cache", "--manifest", manifest)
run("score", "--manifest", manifest)
run("eval", "--manifest", manifest, "--mode", "ablation")
run("sweep", "--manifest", manifest)
print("\noutputs under", work / "out")
