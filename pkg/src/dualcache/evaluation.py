"""AUROC/FPR95 metrics, the K-shot multi-seed protocol, and grid sweeps.

ID is the positive class throughout and higher scores mean more
ID-like. AUROC is the tie-aware Mann-Whitney rank statistic, not a
curve integration; FPR95 uses a conservative threshold (>= comparisons)
so degenerate constant scores yield 1.0 rather than an undefined value.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import product

import numpy as np

from .errors import DualCacheError, EmptyList
from .store import DatasetBundle, EmbeddingMatrix, l2_normalize, sample_shots
from .channels import SelectorConfig, compute_channel_stats, partition_channels
from .adapter import AdapterConfig, DualEngine, build_engine, score_batch

PAPER_FAITHFUL = "paper-faithful-test"
VALIDATION_SPLIT = "validation-split"
TUNING_LABELS = {PAPER_FAITHFUL: "paper-faithful", VALIDATION_SPLIT: "clean"}

# entropy tag mixed into the seed for carving the validation split
_VAL_SPLIT_TAG = 0x1D5EED


def auroc(id_scores, ood_scores) -> float:
    """P(random ID score > random OOD score), ties counted half.

    Computed from average ranks in O(n log n); equals the pairwise
    count (#greater + 0.5 * #equal) / (n_id * n_ood).
    """
    id_scores = np.asarray(id_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    if id_scores.size == 0 or ood_scores.size == 0:
        raise EmptyList("auroc needs non-empty ID and OOD score lists")
    pooled = np.concatenate([id_scores, ood_scores])
    _, inverse, counts = np.unique(pooled, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0  # 1-based average rank per distinct value
    ranks = avg_rank[inverse]
    n_id, n_ood = id_scores.size, ood_scores.size
    u = ranks[:n_id].sum() - n_id * (n_id + 1) / 2.0
    return float(u / (n_id * n_ood))


def fpr_at_tpr(id_scores, ood_scores, tpr: float = 0.95) -> float:
    """Fraction of OOD scores clearing the threshold that keeps `tpr`
    of the ID scores.

    The threshold is the largest value t with #{ID >= t} >= tpr * |ID|,
    i.e. the (n - ceil(tpr*n) + 1)-th smallest ID score; OOD entries
    count as false positives when >= t.
    """
    id_scores = np.asarray(id_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    if id_scores.size == 0 or ood_scores.size == 0:
        raise EmptyList("fpr_at_tpr needs non-empty ID and OOD score lists")
    if not 0.0 < tpr <= 1.0:
        raise DualCacheError(f"tpr must be in (0, 1], got {tpr}")
    n = id_scores.size
    # the epsilon absorbs float round-up in tpr * n (e.g. 0.95 * 20)
    required = math.ceil(tpr * n - 1e-9)
    threshold = np.sort(id_scores)[n - required]
    return float(np.mean(ood_scores >= threshold))


@dataclass(frozen=True)
class EvalResult:
    """One metric row; seed == -1 marks a mean over seeds or datasets."""

    auroc: float
    fpr95: float
    id_count: int
    ood_count: int
    config: AdapterConfig
    seed: int
    dataset_name: str

    def __post_init__(self):
        if not (0.0 <= self.auroc <= 1.0 and 0.0 <= self.fpr95 <= 1.0):
            raise DualCacheError("metrics out of [0, 1]")
        if self.id_count <= 0 or self.ood_count <= 0:
            raise DualCacheError("sample counts must be positive")


@dataclass(frozen=True)
class ProtocolResult:
    rows: tuple[EvalResult, ...]          # one per (dataset, seed)
    per_dataset: tuple[EvalResult, ...]   # seed means, dataset order preserved
    average: EvalResult                   # mean of the per-dataset means


@dataclass(frozen=True)
class SweepGrid:
    """Explicit hyperparameter value lists; axes are sorted ascending so
    grid order (and tie-breaking) is lexicographic in (alpha, beta, tau,
    lambda)."""

    alphas: tuple[float, ...] = (1.0,)
    betas: tuple[float, ...] = (1.0,)
    taus: tuple[float, ...] = (1.0,)
    lambdas: tuple[float, ...] = (0.5,)

    def __post_init__(self):
        for name in ("alphas", "betas", "taus", "lambdas"):
            vals = tuple(sorted(float(v) for v in getattr(self, name)))
            if not vals:
                raise DualCacheError(f"sweep grid axis {name} is empty")
            object.__setattr__(self, name, vals)

    def points(self):
        return product(self.alphas, self.betas, self.taus, self.lambdas)

    def __len__(self):
        return (len(self.alphas) * len(self.betas) * len(self.taus)
                * len(self.lambdas))


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    beta: float
    tau: float
    lam: float
    objective: str
    value: float


@dataclass(frozen=True)
class SweepResult:
    best: SweepRow
    rows: tuple[SweepRow, ...]
    tuning_label: str


def normalize_bundle(bundle: DatasetBundle) -> DatasetBundle:
    """L2-normalize every matrix in the bundle that is not already
    flagged unit-norm. The engine does this by default; raw cosine-style
    scoring presupposes unit vectors."""
    def norm_m(m: EmbeddingMatrix) -> EmbeddingMatrix:
        return m if m.normalized else l2_normalize(m)

    def norm_l(le):
        return replace(le, embeddings=norm_m(le.embeddings))

    return DatasetBundle(
        id_train=norm_l(bundle.id_train),
        id_test=norm_l(bundle.id_test),
        ood_test=tuple((name, norm_m(m)) for name, m in bundle.ood_test),
        vocab=bundle.vocab,
        pos_text=tuple(norm_m(m) for m in bundle.pos_text),
        neg_text=tuple(norm_m(m) for m in bundle.neg_text),
    )


def build_engine_for_seed(bundle: DatasetBundle, k: int, seed: int,
                          cfg: AdapterConfig,
                          selector_cfg: SelectorConfig) -> DualEngine:
    """Sample shots, pick channels, and assemble the engine for one run."""
    shots = sample_shots(bundle.id_train, k, seed)
    stats = compute_channel_stats(shots, selector_cfg)
    partition = partition_channels(stats, selector_cfg)
    return build_engine(shots, bundle.pos_text, bundle.neg_text, partition, cfg)


def _mean_result(results, name: str, cfg: AdapterConfig) -> EvalResult:
    return EvalResult(
        auroc=float(np.mean([r.auroc for r in results])),
        fpr95=float(np.mean([r.fpr95 for r in results])),
        id_count=results[0].id_count,
        ood_count=results[0].ood_count,
        config=cfg,
        seed=-1,
        dataset_name=name,
    )


def run_protocol(bundle: DatasetBundle, k: int, seeds, cfg: AdapterConfig,
                 selector_cfg: SelectorConfig = SelectorConfig(),
                 threads: int = 1) -> ProtocolResult:
    """Per seed: sample shots, build the engine, score ID test and each
    OOD set, compute both metrics; then mean per dataset and overall."""
    seeds = list(seeds)
    if not seeds:
        raise DualCacheError("protocol needs at least one seed")
    if not bundle.ood_test:
        raise DualCacheError("protocol needs at least one OOD test set")
    rows = []
    for seed in seeds:
        engine = build_engine_for_seed(bundle, k, seed, cfg, selector_cfg)
        id_scores = score_batch(engine, bundle.id_test.embeddings, threads).ood_scores
        for name, ood_m in bundle.ood_test:
            ood_scores = score_batch(engine, ood_m, threads).ood_scores
            rows.append(EvalResult(
                auroc=auroc(id_scores, ood_scores),
                fpr95=fpr_at_tpr(id_scores, ood_scores),
                id_count=len(id_scores),
                ood_count=len(ood_scores),
                config=cfg,
                seed=seed,
                dataset_name=name,
            ))
    per_dataset = tuple(
        _mean_result([r for r in rows if r.dataset_name == name], name, cfg)
        for name, _ in bundle.ood_test
    )
    average = _mean_result(list(per_dataset), "Average", cfg)
    return ProtocolResult(rows=tuple(rows), per_dataset=per_dataset,
                          average=average)


ABLATION_MODES = ("positive-only", "negative-only", "dual")


def run_ablation(bundle: DatasetBundle, k: int, seeds, cfg: AdapterConfig,
                 selector_cfg: SelectorConfig = SelectorConfig(),
                 threads: int = 1):
    """The three-row mode comparison: positive-only, negative-only, dual."""
    return [
        (mode, run_protocol(bundle, k, seeds, replace(cfg, mode=mode),
                            selector_cfg, threads))
        for mode in ABLATION_MODES
    ]


def _validation_indices(n_rows: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, _VAL_SPLIT_TAG])))
    n_val = max(1, round(0.2 * n_rows))
    return np.sort(rng.permutation(n_rows)[:n_val])


def sweep(bundle: DatasetBundle, grid: SweepGrid, k: int, seed: int,
          objective: str = "auroc", tuning_set: str = PAPER_FAITHFUL,
          cfg_base: AdapterConfig = AdapterConfig(),
          selector_cfg: SelectorConfig = SelectorConfig(),
          threads: int = 1) -> SweepResult:
    """Evaluate every grid point; return the argbest and the full table.

    paper-faithful-test: the objective (auroc or fpr95, averaged over
    the OOD test sets) is measured on the test data itself. clean
    (validation-split): a seeded 20% slice of ID test is scored for
    top-1 accuracy and the sweep never touches OOD test data. Ties go
    to the lexicographically smallest (alpha, beta, tau, lambda).
    """
    if objective not in ("auroc", "fpr95"):
        raise DualCacheError(f"unknown objective {objective!r}")
    if tuning_set not in TUNING_LABELS:
        raise DualCacheError(f"unknown tuning set {tuning_set!r}")
    clean = tuning_set == VALIDATION_SPLIT

    # engines differ across grid points only through the partition
    # (lambda) and the config; build each lambda's parts once
    engines_by_lam: dict[float, DualEngine] = {}
    for lam in grid.lambdas:
        sel = replace(selector_cfg, lam=lam)
        engines_by_lam[lam] = build_engine_for_seed(bundle, k, seed, cfg_base, sel)

    if clean:
        val_idx = _validation_indices(bundle.id_test.embeddings.rows, seed)
        val_m = EmbeddingMatrix(
            data=bundle.id_test.embeddings.data[val_idx],
            normalized=bundle.id_test.embeddings.normalized)
        val_labels = bundle.id_test.labels[val_idx]
        obj_name = "val-accuracy"
    else:
        obj_name = objective

    def evaluate_point(point) -> SweepRow:
        alpha, beta, tau, lam = point
        cfg = replace(cfg_base, alpha=alpha, beta=beta, tau=tau)
        engine = engines_by_lam[lam].with_config(cfg)
        if clean:
            scored = score_batch(engine, val_m)
            value = float(np.mean(scored.predicted == val_labels))
        else:
            id_scores = score_batch(engine, bundle.id_test.embeddings).ood_scores
            vals = []
            for _, ood_m in bundle.ood_test:
                ood_scores = score_batch(engine, ood_m).ood_scores
                vals.append(auroc(id_scores, ood_scores) if objective == "auroc"
                            else fpr_at_tpr(id_scores, ood_scores))
            value = float(np.mean(vals))
        return SweepRow(alpha=alpha, beta=beta, tau=tau, lam=lam,
                        objective=obj_name, value=value)

    points = list(grid.points())
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(evaluate_point, points))
    else:
        rows = [evaluate_point(p) for p in points]

    minimize = (not clean) and objective == "fpr95"
    best = rows[0]
    for row in rows[1:]:
        if (row.value < best.value) if minimize else (row.value > best.value):
            best = row
    return SweepResult(best=best, rows=tuple(rows),
                       tuning_label=TUNING_LABELS[tuning_set])
