"""Command-line front door.

Experiments are described by declarative INI manifests rather than long
flag strings, so a run can be archived and replayed byte-for-byte. All
randomness flows from the manifest's seeds; repeated invocations of the
same manifest produce identical output files for any --threads value.

Subcommands: select-channels, build-cache, score, eval, sweep, validate.
DUALCACHE_THREADS overrides --threads when set.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DualCacheError
from .store import (
    DatasetBundle,
    EmbeddingMatrix,
    load_embeddings,
    load_labeled,
    load_labels,
    load_vocabulary,
    sample_shots,
    save_embeddings,
)
from .channels import (
    SelectorConfig,
    compute_channel_stats,
    partition_channels,
    save_partition,
)
from .cache import build_cache, partition_fingerprint, save_cache
from .adapter import AdapterConfig, MODES, score_batch
from .evaluation import (
    PAPER_FAITHFUL,
    SweepGrid,
    build_engine_for_seed,
    normalize_bundle,
    run_ablation,
    run_protocol,
    sweep,
)

# accepted values for eval --mode: an engine mode or the 3-row ablation
EVAL_MODES = MODES + ("ablation",)

DEFAULT_SWEEP_RANGES = {"alphas": (0.0, 30.0), "betas": (0.0, 30.0),
                        "taus": (0.03, 10.0)}


class ManifestError(DualCacheError):
    pass


@dataclass(frozen=True)
class RunManifest:
    """Parsed manifest: file paths plus every knob a run needs."""

    id_train: Path
    id_train_labels: Path
    id_test: Path
    id_test_labels: Path
    vocab: Path
    ood: tuple[tuple[str, Path], ...]
    pos_text: tuple[tuple[str, Path], ...]
    neg_text: tuple[tuple[str, Path], ...]
    normalize: bool
    selector: SelectorConfig
    adapter: AdapterConfig
    shots: int
    seeds: tuple[int, ...]
    grid: SweepGrid
    objective: str
    tuning: str
    out_dir: Path

    def referenced_files(self):
        yield self.id_train
        yield self.id_train_labels
        yield self.id_test
        yield self.id_test_labels
        yield self.vocab
        for _, p in self.ood:
            yield p
        for _, p in self.pos_text:
            yield p
        for _, p in self.neg_text:
            yield p

    def validate_files(self) -> None:
        for p in self.referenced_files():
            if not p.exists():
                raise ManifestError(f"missing file: {p}")


def _parse_named_paths(raw: str, base: Path, what: str):
    out = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ManifestError(f"{what} entries must be name:path, got {item!r}")
        name, path = item.split(":", 1)
        out.append((name.strip(), base / path.strip()))
    if not out:
        raise ManifestError(f"{what} list is empty")
    return tuple(out)


def _parse_floats(raw: str):
    return tuple(float(t) for t in raw.replace(",", " ").split())


def parse_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"missing file: {path}")
    ini = configparser.ConfigParser()
    ini.read(path, encoding="utf-8")
    base = path.parent

    def get(section, key, fallback=None):
        return ini.get(section, key, fallback=fallback)

    try:
        data = ini["data"]
    except KeyError:
        raise ManifestError(f"{path}: manifest needs a [data] section") from None

    try:
        selector = SelectorConfig(
            lam=float(get("selector", "lambda", "0.5")),
            q=int(get("selector", "q")) if get("selector", "q") else None,
            criterion_mode=get("selector", "criterion", "variance-negated"),
        )
        adapter = AdapterConfig(
            alpha=float(get("adapter", "alpha", "1.0")),
            beta=float(get("adapter", "beta", "1.0")),
            tau=float(get("adapter", "tau", "1.0")),
            mode=get("adapter", "mode", "dual"),
            pooling=get("adapter", "pooling", "restrict"),
        )
        grid = SweepGrid(
            alphas=_parse_floats(get("sweep", "alphas", get("adapter", "alpha", "1.0"))),
            betas=_parse_floats(get("sweep", "betas", get("adapter", "beta", "1.0"))),
            taus=_parse_floats(get("sweep", "taus", get("adapter", "tau", "1.0"))),
            lambdas=_parse_floats(get("sweep", "lambdas", get("selector", "lambda", "0.5"))),
        )
        seeds = tuple(int(t) for t in
                      get("protocol", "seeds", "0").replace(",", " ").split())

        return RunManifest(
            id_train=base / data["id_train"],
            id_train_labels=base / data["id_train_labels"],
            id_test=base / data["id_test"],
            id_test_labels=base / data["id_test_labels"],
            vocab=base / data["vocab"],
            ood=_parse_named_paths(data["ood"], base, "ood"),
            pos_text=_parse_named_paths(data["pos_text"], base, "pos_text"),
            neg_text=_parse_named_paths(data["neg_text"], base, "neg_text"),
            normalize=data.getboolean("normalize", fallback=True),
            selector=selector,
            adapter=adapter,
            shots=int(get("protocol", "shots", "1")),
            seeds=seeds,
            grid=grid,
            objective=get("sweep", "objective", "auroc"),
            tuning=get("sweep", "tuning", PAPER_FAITHFUL),
            out_dir=base / get("output", "dir", "out"),
        )
    except KeyError as e:
        raise ManifestError(f"{path}: missing manifest key {e}") from None
    except ValueError as e:
        raise ManifestError(f"{path}: bad manifest value: {e}") from None
    except DualCacheError as e:
        raise ManifestError(f"{path}: {e}") from None


def load_bundle(m: RunManifest) -> DatasetBundle:
    vocab = load_vocabulary(m.vocab)
    c = vocab.class_count
    bundle = DatasetBundle(
        id_train=load_labeled(m.id_train, m.id_train_labels, c),
        id_test=load_labeled(m.id_test, m.id_test_labels, c),
        ood_test=tuple((name, load_embeddings(p)) for name, p in m.ood),
        vocab=vocab,
        pos_text=tuple(load_embeddings(p) for _, p in m.pos_text),
        neg_text=tuple(load_embeddings(p) for _, p in m.neg_text),
    )
    return normalize_bundle(bundle) if m.normalize else bundle


def _resolve_threads(args) -> int:
    env = os.environ.get("DUALCACHE_THREADS")
    if env is not None:
        return max(1, int(env))
    return max(1, args.threads)


def _out_dir(m: RunManifest, args) -> Path:
    out = Path(args.out) if args.out else m.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(v: float) -> str:
    return f"{v:.6f}"


# --- subcommands ---

def cmd_select_channels(args) -> int:
    m = parse_manifest(args.manifest)
    m.validate_files()
    out = _out_dir(m, args)
    bundle = load_bundle(m)
    shots = sample_shots(bundle.id_train, m.shots, m.seeds[0])
    stats = compute_channel_stats(shots, m.selector)
    partition = partition_channels(stats, m.selector)

    save_partition(out / "partition.txt", partition)
    lines = ["channel\tsimilarity\tvariance\timportance"]
    for i in range(len(stats.importance)):
        lines.append(f"{i}\t{stats.similarity[i]:.9g}\t"
                     f"{stats.variance[i]:.9g}\t{stats.importance[i]:.9g}")
    (out / "channel_stats.tsv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'partition.txt'}")
    print(f"wrote {out / 'channel_stats.tsv'}")
    return 0


def cmd_build_cache(args) -> int:
    m = parse_manifest(args.manifest)
    m.validate_files()
    out = _out_dir(m, args)
    bundle = load_bundle(m)
    shots = sample_shots(bundle.id_train, m.shots, m.seeds[0])
    stats = compute_channel_stats(shots, m.selector)
    partition = partition_channels(stats, m.selector)
    fp = partition_fingerprint(partition.positive, partition.negative)

    save_partition(out / "partition.txt", partition)
    for side, idx in (("pos", partition.positive), ("neg", partition.negative)):
        cache = build_cache(shots, idx)
        save_cache(out / side, cache, partition_hash=fp)
        print(f"wrote {out / side}.keys.emb ({cache.keys.rows}x{cache.dim})")
    return 0


def _write_scores(path: Path, scored, dump_path: Path | None) -> None:
    lines = [f"{i}\t{s:.9g}\t{c}" for i, (s, c)
             in enumerate(zip(scored.ood_scores, scored.predicted))]
    path.write_text("\n".join(lines) + "\n")
    if dump_path is not None:
        logits = np.concatenate(
            [scored.positive_logits, scored.negative_logits], axis=1)
        save_embeddings(dump_path, EmbeddingMatrix(
            data=logits.astype(np.float32), normalized=False))


def cmd_score(args) -> int:
    m = parse_manifest(args.manifest)
    m.validate_files()
    out = _out_dir(m, args)
    threads = _resolve_threads(args)
    adapter = m.adapter if args.mode is None else replace(m.adapter, mode=args.mode)
    if adapter.mode not in MODES:
        raise ManifestError(f"score mode must be one of {MODES}, got {adapter.mode!r}")
    bundle = load_bundle(m)
    engine = build_engine_for_seed(bundle, m.shots, m.seeds[0], adapter, m.selector)

    scores_dir = out / "scores"
    scores_dir.mkdir(exist_ok=True)
    targets = [("id_test", bundle.id_test.embeddings)]
    targets += [(f"ood_{name}", mat) for name, mat in bundle.ood_test]
    for name, mat in targets:
        scored = score_batch(engine, mat, threads)
        dump = scores_dir / f"{name}.logits.emb" if args.dump_logits else None
        _write_scores(scores_dir / f"{name}.scores.tsv", scored, dump)
        print(f"wrote {scores_dir / f'{name}.scores.tsv'} ({mat.rows} rows)")
    return 0


def _summary_block(mode_results, dataset_names, k, seeds, tuning: str) -> str:
    """Fixed-width block in the classic layout: one row per method, one
    FPR95/AUROC column pair per dataset plus the Average pair."""
    name_w = max(16, max(len(s) for s in ["method"] + list(dataset_names)) + 2)
    cols = list(dataset_names) + ["Average"]
    head1 = "method".ljust(name_w)
    head2 = " " * name_w
    for c in cols:
        head1 += c.ljust(18)
        head2 += "FPR95".rjust(8) + "AUROC".rjust(8) + "  "
    lines = [
        f"K={k} seeds={','.join(map(str, seeds))} tuning={tuning}",
        head1.rstrip(),
        head2.rstrip(),
    ]
    for mode, proto in mode_results:
        row = mode.ljust(name_w)
        for res in list(proto.per_dataset) + [proto.average]:
            row += f"{res.fpr95 * 100:8.2f}{res.auroc * 100:8.2f}  "
        lines.append(row.rstrip())
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    m = parse_manifest(args.manifest)
    m.validate_files()
    out = _out_dir(m, args)
    threads = _resolve_threads(args)
    mode = args.mode or m.adapter.mode
    if mode not in EVAL_MODES:
        raise ManifestError(f"eval mode must be one of {EVAL_MODES}, got {mode!r}")
    bundle = load_bundle(m)

    if mode == "ablation":
        mode_results = run_ablation(bundle, m.shots, m.seeds, m.adapter,
                                    m.selector, threads)
    else:
        adapter = replace(m.adapter, mode=mode)
        mode_results = [(mode, run_protocol(bundle, m.shots, m.seeds, adapter,
                                            m.selector, threads))]

    rows = ["dataset\tk\tseed\talpha\tbeta\ttau\tlambda\tmode\tfpr95\tauroc"]
    for mode_name, proto in mode_results:
        for r in proto.rows:
            rows.append(
                f"{r.dataset_name}\t{m.shots}\t{r.seed}\t{r.config.alpha:g}\t"
                f"{r.config.beta:g}\t{r.config.tau:g}\t{m.selector.lam:g}\t"
                f"{mode_name}\t{_fmt(r.fpr95)}\t{_fmt(r.auroc)}"
            )
    (out / "results.tsv").write_text("\n".join(rows) + "\n")

    dataset_names = [name for name, _ in bundle.ood_test]
    summary = _summary_block(mode_results, dataset_names, m.shots, m.seeds,
                             tuning="none")
    (out / "summary.txt").write_text(summary)
    print(f"wrote {out / 'results.tsv'}")
    print(f"wrote {out / 'summary.txt'}")
    sys.stdout.write(summary)
    return 0


def cmd_sweep(args) -> int:
    m = parse_manifest(args.manifest)
    m.validate_files()
    out = _out_dir(m, args)
    threads = _resolve_threads(args)
    for axis, (lo, hi) in DEFAULT_SWEEP_RANGES.items():
        vals = getattr(m.grid, axis)
        outside = [v for v in vals if not lo <= v <= hi]
        if outside:
            print(f"warning: {axis} values {outside} outside the default "
                  f"range [{lo:g}, {hi:g}]; proceeding", file=sys.stderr)
    bundle = load_bundle(m)
    result = sweep(bundle, m.grid, m.shots, m.seeds[0], objective=m.objective,
                   tuning_set=m.tuning, cfg_base=m.adapter,
                   selector_cfg=m.selector, threads=threads)

    rows = ["alpha\tbeta\ttau\tlambda\tobjective\tvalue\ttuning"]
    for r in result.rows:
        rows.append(f"{r.alpha:g}\t{r.beta:g}\t{r.tau:g}\t{r.lam:g}\t"
                    f"{r.objective}\t{_fmt(r.value)}\t{result.tuning_label}")
    (out / "sweep.tsv").write_text("\n".join(rows) + "\n")

    b = result.best
    best_txt = (
        f"tuning={result.tuning_label}\n"
        f"objective={b.objective}\n"
        f"value={_fmt(b.value)}\n"
        f"alpha={b.alpha:g}\nbeta={b.beta:g}\ntau={b.tau:g}\nlambda={b.lam:g}\n"
    )
    (out / "best.txt").write_text(best_txt)
    print(f"wrote {out / 'sweep.tsv'} ({len(result.rows)} points)")
    print(f"wrote {out / 'best.txt'}")
    sys.stdout.write(best_txt)
    return 0


def _validate_one(path: Path) -> str | None:
    """Return None if the file loads cleanly, else the failure message."""
    try:
        if path.suffix == ".lbl":
            load_labels(path)
        elif path.suffix == ".emb":
            load_embeddings(path)
        else:
            load_vocabulary(path)
        return None
    except (DualCacheError, UnicodeDecodeError, OSError) as e:
        return str(e)


def cmd_validate(args) -> int:
    targets: list[Path] = [Path(f) for f in args.files]
    if args.manifest:
        m = parse_manifest(args.manifest)
        targets = list(m.referenced_files()) + targets
    if not targets:
        print("error: validate needs --manifest and/or file arguments",
              file=sys.stderr)
        return 2
    failures = 0
    for path in targets:
        if not path.exists():
            print(f"FAIL {path}: missing file")
            failures += 1
            continue
        msg = _validate_one(path)
        if msg is None:
            print(f"OK   {path}")
        else:
            print(f"FAIL {path}: {msg}")
            failures += 1
    return 0 if failures == 0 else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualcache",
        description="Training-free dual cache-model OOD detection engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest_required=True):
        p.add_argument("--manifest", required=manifest_required,
                       help="path to the run manifest (INI)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (DUALCACHE_THREADS overrides)")
        p.add_argument("--mode", default=None,
                       help="adapter mode override")

    p = sub.add_parser("select-channels", help="write the channel partition and stats")
    common(p)
    p.set_defaults(func=cmd_select_channels)

    p = sub.add_parser("build-cache", help="build and serialize both cache models")
    common(p)
    p.set_defaults(func=cmd_build_cache)

    p = sub.add_parser("score", help="score ID and OOD test sets sample by sample")
    common(p)
    p.add_argument("--dump-logits", action="store_true",
                   help="also dump concatenated adapter logits as EMB1")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="run the shots x seeds protocol and report metrics")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid-search hyperparameters")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check manifest files and/or EMB1/LBL1 files")
    common(p, manifest_required=False)
    p.add_argument("files", nargs="*", help="extra files to validate")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ManifestError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: missing file: {e.filename or e}", file=sys.stderr)
        return 2
    except DualCacheError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
