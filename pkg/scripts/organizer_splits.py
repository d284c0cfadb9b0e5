#!/usr/bin/env python3
"""Repeated train/test runs on the organizer splits.

Expects a directory with train.jsonl / dev.jsonl / test.jsonl (see
docs/data_format.md) and a layered embedding store covering every post.
Trains the stance model on the train split with N different seeds, evaluates
each run on the test split, and reports mean ± sample standard deviation per
metric.  With --task both, each run also feeds its stance estimates into the
veracity model and reports its metrics alongside.
"""

import argparse
from pathlib import Path

from rumorpipe.embeddings import load_store
from rumorpipe.eval import (
    dump_report,
    evaluate_stance,
    evaluate_veracity,
    render_table,
    repeated_runs,
    report_payload,
)
from rumorpipe.models import (
    ConfigA,
    ConfigB,
    estimates_by_id,
    predict_a,
    predict_b,
    train_a,
    train_b,
)
from rumorpipe.thread_model import load_dataset


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", type=Path, required=True,
                        help="directory holding train.jsonl and test.jsonl")
    parser.add_argument("--store", type=Path, required=True)
    parser.add_argument("--task", choices=("a", "both"), default="a")
    parser.add_argument("--runs", type=int, default=10)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--epochs-b", type=int, default=None)
    parser.add_argument("--out", type=Path, default=Path("runs/organizer"))
    args = parser.parse_args()

    train = load_dataset(args.data / "train.jsonl", "train")
    test = load_dataset(args.data / "test.jsonl", "test")
    store = load_store(args.store)

    config_a = ConfigA(embedding_dim=store.dimension)
    if args.epochs is not None:
        config_a = ConfigA(embedding_dim=store.dimension, epochs=args.epochs)
    config_b = ConfigB() if args.epochs_b is None else ConfigB(epochs=args.epochs_b)

    def one_run(seed: int) -> dict[str, float]:
        result = train_a(train, store, config_a, seed)
        estimates = predict_a(result.model, test, store, result.scaler, result.mix)
        metrics = {f"a_{k}": v for k, v in evaluate_stance(estimates, test).metrics().items()}
        if args.task == "both":
            train_estimates = estimates_by_id(
                predict_a(result.model, train, store, result.scaler, result.mix)
            )
            result_b = train_b(train, train_estimates, config_b, seed, scaler=result.scaler)
            verdicts = predict_b(result_b.model, test, estimates_by_id(estimates), result.scaler)
            metrics |= {f"b_{k}": v for k, v in evaluate_veracity(verdicts, test).metrics().items()}
        print(f"seed {seed}: " + ", ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
        return metrics

    seeds = range(args.seed, args.seed + args.runs)
    stats = repeated_runs(one_run, list(seeds))

    args.out.mkdir(parents=True, exist_ok=True)
    report = args.out / "report.json"
    payload = report_payload(stats, task=args.task, protocol="organizer-splits",
                             runs=args.runs, seed=args.seed)
    report.write_text(dump_report(payload))
    print()
    print(render_table(stats, title=f"task={args.task} over {args.runs} runs"))
    print(f"wrote {report}")


if __name__ == "__main__":
    main()
