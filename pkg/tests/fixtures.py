"""Shared synthetic data for the test suite.

`separable_bundle` is the seeded 3-cluster fixture: two well-separated
unit-norm Gaussian ID clusters plus one OOD cluster that leans toward
class 0 on the class-bearing channels while riding a coherent background
direction on the remaining channels. The background coherence is what
the negative adapter can see and the positive adapter cannot, so dual
mode visibly beats both positive-only and the MCM baseline here.

Constants were calibrated once and are frozen; tests depend on them.
"""

from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from dualcache import (
    AdapterConfig,
    ClassVocabulary,
    DatasetBundle,
    EmbeddingMatrix,
    LabeledEmbeddings,
    SelectorConfig,
    normalize_bundle,
    save_embeddings,
    save_labels,
    save_vocabulary,
)

N_DIM = 16
FIXTURE_SEEDS = (0, 1, 2, 3, 4)
FIXTURE_SHOTS = 16
FIXTURE_CONFIG = AdapterConfig(alpha=0.3, beta=1.0, tau=1.0, mode="dual")
FIXTURE_SELECTOR = SelectorConfig()


def separable_bundle(seed: int, n_train: int = 40, n_test_per_class: int = 100,
                     n_ood: int = 200) -> DatasetBundle:
    rng = np.random.default_rng(seed)
    c = 2
    e = np.zeros((c, N_DIM), dtype=np.float64)
    e[0, 0] = 1.0
    e[1, 1] = 1.0
    g = np.zeros(N_DIM)
    g[8:] = 1.0 / np.sqrt(8.0)   # shared background direction
    u = np.zeros(N_DIM)
    u[2:8] = 1.0 / np.sqrt(6.0)  # novel semantic direction, OOD only

    def id_rows(cls, n):
        return e[cls] + 0.25 * g + 0.13 * rng.standard_normal((n, N_DIM))

    ood_center = 0.65 * e[0] + 0.3 * u + 0.9 * g
    ood = ood_center + 0.13 * rng.standard_normal((n_ood, N_DIM))

    train = np.concatenate([id_rows(cls, n_train) for cls in range(c)])
    test = np.concatenate([id_rows(cls, n_test_per_class) for cls in range(c)])

    pos_t1 = e + 0.02 * rng.standard_normal((c, N_DIM))
    pos_t2 = e + 0.1 * g + 0.02 * rng.standard_normal((c, N_DIM))
    neg_t1 = g + 0.15 * e + 0.02 * rng.standard_normal((c, N_DIM))
    neg_t2 = g + 0.02 * rng.standard_normal((c, N_DIM))

    def mk(a):
        return EmbeddingMatrix(data=a.astype(np.float32))

    bundle = DatasetBundle(
        id_train=LabeledEmbeddings(mk(train), np.repeat(np.arange(c), n_train), c),
        id_test=LabeledEmbeddings(mk(test), np.repeat(np.arange(c), n_test_per_class), c),
        ood_test=(("cluster3", mk(ood)),),
        vocab=ClassVocabulary(("class0", "class1")),
        pos_text=(mk(pos_t1), mk(pos_t2)),
        neg_text=(mk(neg_t1), mk(neg_t2)),
    )
    return normalize_bundle(bundle)


def tiny_instance(rng: np.random.Generator) -> dict:
    """One random small problem for pipeline-oracle comparisons."""
    c = int(rng.integers(2, 6))
    k = int(rng.integers(1, 4))
    n = int(rng.choice([4, 8, 12, 16]))
    shots_raw = rng.standard_normal((c * k, n))
    labels = np.repeat(np.arange(c), k)
    n_pos_t = int(rng.integers(1, 3))
    n_neg_t = int(rng.integers(1, 3))
    pos_templates = [rng.standard_normal((c, n)) for _ in range(n_pos_t)]
    neg_templates = [rng.standard_normal((c, n)) for _ in range(n_neg_t)]
    f = rng.standard_normal(n)
    f = f / np.linalg.norm(f)
    return {
        "c": c,
        "k": k,
        "n": n,
        "q": n // 2,
        "shots_raw": shots_raw,
        "labels": labels,
        "pos_templates": pos_templates,
        "neg_templates": neg_templates,
        "f": f,
        "alpha": float(rng.uniform(0.0, 3.0)),
        "beta": float(rng.uniform(0.0, 8.0)),
        "tau": float(rng.choice([0.03, 0.5, 1.0, 10.0])),
        "lam": float(rng.uniform(0.0, 1.0)),
        "criterion": str(rng.choice(["paper-literal", "variance-negated"])),
        "pooling": str(rng.choice(["restrict", "avgpool"])),
    }


def write_bundle_files(bundle: DatasetBundle, root: Path,
                       shots: int = FIXTURE_SHOTS,
                       seeds=(0,),
                       adapter: AdapterConfig = FIXTURE_CONFIG,
                       selector: SelectorConfig = FIXTURE_SELECTOR,
                       sweep_section: dict | None = None) -> Path:
    """Serialize a bundle plus a manifest into `root`; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    save_embeddings(root / "train.emb", bundle.id_train.embeddings)
    save_labels(root / "train.lbl", bundle.id_train.labels)
    save_embeddings(root / "test.emb", bundle.id_test.embeddings)
    save_labels(root / "test.lbl", bundle.id_test.labels)
    save_vocabulary(root / "classes.txt", bundle.vocab)
    ood_entries = []
    for name, m in bundle.ood_test:
        save_embeddings(root / f"ood_{name}.emb", m)
        ood_entries.append(f"{name}:ood_{name}.emb")
    pos_entries, neg_entries = [], []
    for i, m in enumerate(bundle.pos_text):
        save_embeddings(root / f"pos.t{i}.text.emb", m)
        pos_entries.append(f"t{i}:pos.t{i}.text.emb")
    for i, m in enumerate(bundle.neg_text):
        save_embeddings(root / f"neg.n{i}.text.emb", m)
        neg_entries.append(f"n{i}:neg.n{i}.text.emb")

    ini = configparser.ConfigParser()
    ini["data"] = {
        "id_train": "train.emb",
        "id_train_labels": "train.lbl",
        "id_test": "test.emb",
        "id_test_labels": "test.lbl",
        "vocab": "classes.txt",
        "ood": ", ".join(ood_entries),
        "pos_text": ", ".join(pos_entries),
        "neg_text": ", ".join(neg_entries),
        "normalize": "true",
    }
    ini["selector"] = {
        "lambda": str(selector.lam),
        "criterion": selector.criterion_mode,
    }
    if selector.q is not None:
        ini["selector"]["q"] = str(selector.q)
    ini["adapter"] = {
        "alpha": str(adapter.alpha),
        "beta": str(adapter.beta),
        "tau": str(adapter.tau),
        "mode": adapter.mode,
        "pooling": adapter.pooling,
    }
    ini["protocol"] = {
        "shots": str(shots),
        "seeds": ", ".join(str(s) for s in seeds),
    }
    if sweep_section:
        ini["sweep"] = {k: str(v) for k, v in sweep_section.items()}
    ini["output"] = {"dir": "out"}
    manifest = root / "run.ini"
    with manifest.open("w", encoding="utf-8") as fh:
        ini.write(fh)
    return manifest
