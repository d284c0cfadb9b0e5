"""Command-line pipeline driver.

Every writing subcommand drops its artifacts under --out with fixed names
(tokens.tsv, embeddings.bin, checkpoint_a.bin, checkpoint_b.bin,
predictions_a.jsonl, predictions_b.jsonl, report.json) plus a manifest.json
recording the command, seeds, and input digests needed to replay the run.
Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingStore, build_fake_store, load_store, save_store
from .eval import (
    MetricSummary,
    dump_report,
    evaluate_stance,
    evaluate_veracity,
    grouped_kfold,
    render_table,
    report_payload,
    split_by_fold,
    summarize_single_runs,
)
from .models import (
    ConfigA,
    ConfigB,
    SdqcEstimate,
    VeracityEstimate,
    load_checkpoint,
    predict_a,
    predict_b,
    save_checkpoint,
    train_a,
    train_b,
)
from .preprocess import normalize_and_tokenize, tokens_or_placeholder
from .thread_model import Dataset, load_dataset_with_report

_VALIDATION_ERRORS = (
    ValueError,  # covers ParseError, IntegrityError, StoreFormatError, shape and config errors
    KeyError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
)


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the pipeline reserves 2
    for runtime failures, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def worker_count() -> int:
    raw = os.environ.get("RUMORPIPE_THREADS")
    if raw is None:
        return 1
    count = int(raw)
    if count < 1:
        raise ValueError(f"RUMORPIPE_THREADS must be >= 1, got {raw!r}")
    return count


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return f"sha256:{digest.hexdigest()}"


def _write_manifest(out: Path, args: argparse.Namespace, inputs: Sequence[Path], outputs: Sequence[str], config: dict | None = None) -> None:
    manifest = {
        "command": args.command,
        "argv": args._argv,
        "seed": getattr(args, "seed", None),
        "threads": worker_count(),
        "config": config or {},
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": sorted(outputs),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(path: str, split: str) -> Dataset:
    dataset, report = load_dataset_with_report(path, split)
    for note in report.flagged:
        print(f"note: {note}", file=sys.stderr)
    return dataset


def _write_jsonl(path: Path, rows: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}: line {line_no}: {err}") from err
    return rows


def _stance_rows(estimates: Sequence[SdqcEstimate]) -> list[dict]:
    return [
        {
            "id": e.post_id,
            "probabilities": list(e.probabilities),
            "label": e.label,
            "confidence": max(e.probabilities),
        }
        for e in estimates
    ]


def _veracity_rows(estimates: Sequence[VeracityEstimate]) -> list[dict]:
    return [
        {
            "id": e.thread_id,
            "probabilities": list(e.probabilities),
            "label": e.label,
            "confidence": e.confidence,
        }
        for e in estimates
    ]


def _estimates_from_rows(rows: Sequence[dict]) -> dict[str, tuple[float, ...]]:
    out = {}
    for row in rows:
        if "id" not in row or "probabilities" not in row:
            raise ValueError("prediction rows need 'id' and 'probabilities' fields")
        out[str(row["id"])] = tuple(float(p) for p in row["probabilities"])
    return out


# ---------------------------------------------------------------------------
# per-task config assembly

_SHARED_FIELDS = ("epochs", "batch_size", "learning_rate", "dropout_rate", "hidden_units", "dense_layers", "l2_weight")


def _add_config_flags(parser: argparse.ArgumentParser, *, conv: bool) -> None:
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--dropout", type=float, dest="dropout_rate")
    parser.add_argument("--hidden-units", type=int, dest="hidden_units")
    parser.add_argument("--dense-layers", type=int, dest="dense_layers")
    parser.add_argument("--l2", type=float, dest="l2_weight")
    if conv:
        parser.add_argument("--channels", type=int)
        parser.add_argument("--kernel-sizes", type=str, dest="kernel_sizes", help="comma-separated, e.g. 2,3")


def _overrides(args: argparse.Namespace, fields: Sequence[str]) -> dict:
    out = {}
    for name in fields:
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    return out


def _config_a(args: argparse.Namespace, embedding_dim: int) -> ConfigA:
    kwargs = _overrides(args, _SHARED_FIELDS + ("channels",))
    raw_kernels = getattr(args, "kernel_sizes", None)
    if raw_kernels is not None:
        kwargs["kernel_sizes"] = tuple(int(k) for k in raw_kernels.split(","))
    return ConfigA(embedding_dim=embedding_dim, **kwargs)


def _config_b(args: argparse.Namespace) -> ConfigB:
    return ConfigB(**_overrides(args, _SHARED_FIELDS))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_preprocess(args: argparse.Namespace) -> None:
    out = _out_dir(args)
    dataset = _load_data(args.data, args.split)
    n_posts = 0
    with open(out / "tokens.tsv", "w") as fh:
        for post in dataset.posts:
            tokens = tokens_or_placeholder(normalize_and_tokenize(post.raw_text))
            fh.write(f"{post.id}\t{' '.join(tokens)}\n")
            n_posts += 1
    _write_manifest(out, args, [Path(args.data)], ["tokens.tsv"])
    print(f"wrote tokens.tsv: {n_posts} posts from {len(dataset.threads)} threads")


def _cmd_embed_fake(args: argparse.Namespace) -> None:
    out = _out_dir(args)
    dataset = _load_data(args.data, args.split)
    store = build_fake_store(dataset, args.seed, dim=args.dim, num_layers=args.layers)
    save_store(store, out / "embeddings.bin")
    _write_manifest(out, args, [Path(args.data)], ["embeddings.bin"], {"dim": args.dim, "layers": args.layers})
    print(f"wrote embeddings.bin: {len(store)} posts, dim={args.dim}, layers={args.layers}")


def _cmd_embed_import(args: argparse.Namespace) -> None:
    out = _out_dir(args)
    store = load_store(args.store)
    inputs = [Path(args.store)]
    if args.data:
        dataset = _load_data(args.data, args.split)
        missing = [p.id for p in dataset.posts if p.id not in store]
        if missing:
            shown = ", ".join(missing[:5])
            raise ValueError(f"store is missing {len(missing)} posts from {args.data} (first: {shown})")
        inputs.append(Path(args.data))
    _write_manifest(out, args, inputs, [], {"dim": store.dimension, "layers": store.num_layers})
    print(f"store ok: {len(store)} posts, dim={store.dimension}, layers={store.num_layers}")


def _resolve_stance_estimates(
    args: argparse.Namespace,
    dataset: Dataset,
    store: EmbeddingStore | None,
    out: Path,
    inputs: list[Path],
) -> Mapping[str, tuple[float, ...]]:
    """Stance estimates for subtask B: an explicit file wins, else a stance
    checkpoint is used to predict them on the spot."""
    if args.estimates:
        inputs.append(Path(args.estimates))
        return _estimates_from_rows(_read_jsonl(args.estimates))
    checkpoint = Path(args.checkpoint_a) if args.checkpoint_a else out / "checkpoint_a.bin"
    if not checkpoint.exists():
        raise ValueError(
            "subtask B needs stance estimates: pass --estimates predictions_a.jsonl "
            f"or --checkpoint-a (no checkpoint at {checkpoint})"
        )
    if store is None:
        raise ValueError("predicting stance estimates from a checkpoint needs --store")
    bundle = load_checkpoint(checkpoint)
    if bundle.task != "a":
        raise ValueError(f"{checkpoint} holds a task-{bundle.task} model, expected task a")
    inputs.append(checkpoint)
    estimates = predict_a(bundle.model, dataset, store, bundle.scaler, bundle.mix)
    _write_jsonl(out / "predictions_a.jsonl", _stance_rows(estimates))
    return {e.post_id: e.probabilities for e in estimates}


def _cmd_train(args: argparse.Namespace) -> None:
    out = _out_dir(args)
    dataset = _load_data(args.data, "train")
    store = load_store(args.store) if args.store else None
    inputs = [Path(args.data)] + ([Path(args.store)] if args.store else [])
    outputs: list[str] = []
    config_used: dict = {}
    estimates: Mapping[str, tuple[float, ...]] | None = None

    if args.task in ("a", "both"):
        if store is None:
            raise ValueError("training subtask A needs --store")
        config = _config_a(args, store.dimension)
        result = train_a(dataset, store, config, args.seed)
        save_checkpoint(out / "checkpoint_a.bin", result.model, result.scaler, result.mix)
        outputs.append("checkpoint_a.bin")
        config_used["a"] = json.loads(json.dumps(config.__dict__, default=list))
        print(f"task a: trained {config.epochs} epochs, final loss {result.loss_trace[-1]:.4f}")
        if args.task == "both":
            stance = predict_a(result.model, dataset, store, result.scaler, result.mix)
            _write_jsonl(out / "predictions_a.jsonl", _stance_rows(stance))
            outputs.append("predictions_a.jsonl")
            estimates = {e.post_id: e.probabilities for e in stance}

    if args.task in ("b", "both"):
        if estimates is None:
            estimates = _resolve_stance_estimates(args, dataset, store, out, inputs)
            if (out / "predictions_a.jsonl").exists():
                outputs.append("predictions_a.jsonl")
        config_b = _config_b(args)
        result_b = train_b(dataset, estimates, config_b, args.seed)
        save_checkpoint(out / "checkpoint_b.bin", result_b.model, result_b.scaler)
        outputs.append("checkpoint_b.bin")
        config_used["b"] = json.loads(json.dumps(config_b.__dict__, default=list))
        print(f"task b: trained {config_b.epochs} epochs, final loss {result_b.loss_trace[-1]:.4f}")

    _write_manifest(out, args, inputs, outputs, config_used)


def _cmd_predict(args: argparse.Namespace) -> None:
    out = _out_dir(args)
    dataset = _load_data(args.data, args.split)
    bundle = load_checkpoint(args.checkpoint)
    inputs = [Path(args.data), Path(args.checkpoint)]
    if bundle.task != args.task:
        raise ValueError(f"{args.checkpoint} holds a task-{bundle.task} model, expected task {args.task}")
    if args.task == "a":
        if not args.store:
            raise ValueError("predicting subtask A needs --store")
        store = load_store(args.store)
        inputs.append(Path(args.store))
        estimates = predict_a(bundle.model, dataset, store, bundle.scaler, bundle.mix)
        _write_jsonl(out / "predictions_a.jsonl", _stance_rows(estimates))
        outputs = ["predictions_a.jsonl"]
        print(f"wrote predictions_a.jsonl: {len(estimates)} posts")
    else:
        store = load_store(args.store) if args.store else None
        if args.store:
            inputs.append(Path(args.store))
        stance = _resolve_stance_estimates(args, dataset, store, out, inputs)
        veracity = predict_b(bundle.model, dataset, stance, bundle.scaler)
        _write_jsonl(out / "predictions_b.jsonl", _veracity_rows(veracity))
        outputs = ["predictions_b.jsonl"]
        if (out / "predictions_a.jsonl").exists():
            outputs.append("predictions_a.jsonl")
        print(f"wrote predictions_b.jsonl: {len(veracity)} threads")
    _write_manifest(out, args, inputs, outputs)


def _cmd_eval(args: argparse.Namespace) -> None:
    out = _out_dir(args)
    dataset = _load_data(args.data, args.split)
    rows = _read_jsonl(args.predictions)
    if args.task == "a":
        estimates = [SdqcEstimate(post_id=str(r["id"]), probabilities=tuple(float(p) for p in r["probabilities"])) for r in rows]
        report = evaluate_stance(estimates, dataset)
    else:
        veracity = [VeracityEstimate.from_probabilities(str(r["id"]), [float(p) for p in r["probabilities"]]) for r in rows]
        report = evaluate_veracity(veracity, dataset)
    stats = summarize_single_runs(report.metrics())
    payload = report_payload(stats, task=args.task, protocol="holdout", split=dataset.split, n_items=report.n_items)
    (out / "report.json").write_text(dump_report(payload))
    _write_manifest(out, args, [Path(args.data), Path(args.predictions)], ["report.json"])
    print(render_table(stats, f"task {args.task} on {dataset.split} ({report.n_items} items)"))


def _fold_seed(seed: int, repeat: int, fold: int | None = None) -> int:
    key = (seed, repeat) if fold is None else (seed, repeat, fold)
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _cv_fold_metrics(
    task: str,
    dataset: Dataset,
    store: EmbeddingStore,
    config_a: ConfigA,
    config_b: ConfigB | None,
    seed: int,
    repeat: int,
    fold: int,
    assignment,
) -> dict[str, float]:
    train_split, held_split = split_by_fold(dataset, assignment, fold)
    run_seed = _fold_seed(seed, repeat, fold)
    result_a = train_a(train_split, store, config_a, run_seed)
    if task == "a":
        estimates = predict_a(result_a.model, held_split, store, result_a.scaler, result_a.mix)
        return evaluate_stance(estimates, held_split).metrics()
    stance_train = predict_a(result_a.model, train_split, store, result_a.scaler, result_a.mix)
    result_b = train_b(train_split, stance_train, config_b, run_seed, scaler=result_a.scaler)
    stance_held = predict_a(result_a.model, held_split, store, result_a.scaler, result_a.mix)
    veracity = predict_b(result_b.model, held_split, stance_held, result_b.scaler)
    return evaluate_veracity(veracity, held_split).metrics()


def _cmd_cv(args: argparse.Namespace) -> None:
    out = _out_dir(args)
    dataset = _load_data(args.data, "train")
    store = load_store(args.store)
    threads = worker_count()
    if args.task == "a":
        config_a = _config_a(args, store.dimension)
        config_b = None
    else:
        config_a = ConfigA(embedding_dim=store.dimension, **({"epochs": args.epochs_a} if args.epochs_a else {}))
        config_b = _config_b(args)

    jobs = []
    for repeat in range(args.repeats):
        assignment = grouped_kfold(dataset, args.k, _fold_seed(args.seed, repeat))
        for fold in range(args.k):
            jobs.append((repeat, fold, assignment))

    def run_job(job):
        repeat, fold, assignment = job
        return _cv_fold_metrics(args.task, dataset, store, config_a, config_b, args.seed, repeat, fold, assignment)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        fold_metrics = list(pool.map(run_job, jobs))

    names = list(fold_metrics[0])
    stats = {
        name: MetricSummary(
            mean=float(np.mean([m[name] for m in fold_metrics])),
            std=float(np.std([m[name] for m in fold_metrics], ddof=1)),
            values=tuple(float(m[name]) for m in fold_metrics),
        )
        for name in names
    }
    folds = [
        {"repeat": repeat, "fold": fold, "metrics": metrics}
        for (repeat, fold, _), metrics in zip(jobs, fold_metrics)
    ]
    payload = report_payload(stats, task=args.task, protocol="cv", k=args.k, repeats=args.repeats, seed=args.seed, folds=folds)
    (out / "report.json").write_text(dump_report(payload))
    _write_manifest(out, args, [Path(args.data), Path(args.store)], ["report.json"])
    print(render_table(stats, f"task {args.task}: {args.k}-fold cv, {args.repeats} repeats, seed {args.seed}"))


def _cmd_report(args: argparse.Namespace) -> None:
    path = Path(args.out) / "report.json"
    payload = json.loads(path.read_text())
    stats = {
        name: MetricSummary(mean=entry["mean"], std=entry["std"], values=tuple(entry["values"]))
        for name, entry in payload["metrics"].items()
    }
    context = ", ".join(f"{k}={payload[k]}" for k in ("task", "protocol", "k", "repeats", "seed", "split", "n_items") if k in payload)
    print(render_table(stats, context or str(path)))


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="rumorpipe", description="Rumor thread stance and veracity pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="tokenize posts into a token-per-line file")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_preprocess)

    p = sub.add_parser("embed-fake", help="build a deterministic pseudo-embedding store")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="train")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_embed_fake)

    p = sub.add_parser("embed-import", help="validate an externally produced embedding store")
    p.add_argument("--store", required=True)
    p.add_argument("--data", help="optionally check that every post has an embedding")
    p.add_argument("--split", choices=("train", "dev", "test"), default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_embed_import)

    p = sub.add_parser("train", help="train the stance and/or veracity model")
    p.add_argument("--task", choices=("a", "b", "both"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--store", help="embedding store (required for task a)")
    p.add_argument("--estimates", help="stance predictions for task b")
    p.add_argument("--checkpoint-a", dest="checkpoint_a", help="stance checkpoint to derive estimates for task b")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    _add_config_flags(p, conv=True)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("predict", help="predict with a trained checkpoint")
    p.add_argument("--task", choices=("a", "b"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store")
    p.add_argument("--estimates")
    p.add_argument("--checkpoint-a", dest="checkpoint_a")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--task", choices=("a", "b"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("cv", help="grouped k-fold cross validation")
    p.add_argument("--task", choices=("a", "b"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs-a", type=int, dest="epochs_a", help="stance epochs inside task b folds")
    p.add_argument("--out", required=True)
    _add_config_flags(p, conv=True)
    p.set_defaults(handler=_cmd_cv)

    p = sub.add_parser("report", help="print the score table from a report.json")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_report)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse signals usage errors and --help via exit
        return int(exit_.code or 0)
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        args.handler(args)
    except _VALIDATION_ERRORS as err:
        message = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"error: {message}", file=sys.stderr)
        return 1
    except Exception as err:  # runtime failures: numerics, I/O mid-stream
        print(f"runtime error: {err}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
