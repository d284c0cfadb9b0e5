#!/usr/bin/env python3
"""End-to-end pipeline demo on synthetic data.

Generates a small labelled dataset with class-separable texts, then drives
every CLI stage in sequence: preprocess, fake embeddings, joint training,
prediction, evaluation, and grouped cross-validation.  Useful as a smoke test
and as a template for wiring the stages together on real data.
"""

import argparse
import sys
from pathlib import Path

from rumorpipe.cli import run
from rumorpipe.thread_model import (
    SDQC_LABELS,
    VERACITY_LABELS,
    Dataset,
    Platform,
    Post,
    Thread,
    save_dataset,
)

STANCE_TEXTS = {
    "support": "yes confirmed this is true source says so",
    "deny": "no way that is false nonsense debunked",
    "query": "is this real ? any proof ? source ?",
    "comment": "wow crazy times we live in honestly",
}


def synthetic_dataset(n_topics: int) -> Dataset:
    threads = []
    for t in range(n_topics):
        platform = Platform.TWITTER if t % 2 == 0 else Platform.REDDIT
        thread_id = f"syn{t}"
        topic = f"rumor-{t}" if platform is Platform.TWITTER else None
        meta = dict(platform=platform, user_verified=t % 3 == 0)
        if platform is Platform.TWITTER:
            meta.update(follower_count=100 * (t + 1), following_count=10 * (t + 1))
        source = Post(
            id=f"{thread_id}-p0", thread_id=thread_id, parent_id=None,
            raw_text=STANCE_TEXTS["support"] + f" marker{t}",
            sdqc_label="support", topic=topic, has_image=t % 2 == 0, **meta,
        )
        replies = tuple(
            Post(
                id=f"{thread_id}-p{i + 1}", thread_id=thread_id,
                parent_id=f"{thread_id}-p0",
                raw_text=STANCE_TEXTS[label] + f" marker{t}",
                sdqc_label=label, **meta,
            )
            for i, label in enumerate(SDQC_LABELS[1:])
        )
        veracity = VERACITY_LABELS[t % 3]
        threads.append(Thread(source=source, replies=replies, veracity_label=veracity))
    return Dataset(threads=tuple(threads), split="train")


def stage(argv: list[str]) -> None:
    print(f"$ rumorpipe {' '.join(argv)}")
    code = run(argv)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/synthetic"))
    parser.add_argument("--topics", type=int, default=12)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    data = out / "data.jsonl"
    save_dataset(synthetic_dataset(args.topics), data)
    print(f"wrote {data}")

    seed = str(args.seed)
    tiny = ["--epochs", "50", "--batch-size", "32", "--channels", "16",
            "--hidden-units", "32", "--dense-layers", "2"]
    stage(["preprocess", "--data", str(data), "--out", str(out)])
    stage(["embed-fake", "--data", str(data), "--dim", "16", "--seed", seed, "--out", str(out)])
    store = str(out / "embeddings.bin")
    stage(["train", "--task", "both", "--data", str(data), "--store", store,
           "--seed", seed, "--out", str(out), *tiny])
    stage(["predict", "--task", "a", "--data", str(data), "--checkpoint",
           str(out / "checkpoint_a.bin"), "--store", store, "--split", "train",
           "--out", str(out)])
    stage(["eval", "--task", "a", "--data", str(data), "--predictions",
           str(out / "predictions_a.jsonl"), "--split", "train", "--out", str(out)])
    stage(["cv", "--task", "a", "--data", str(data), "--store", store, "--k", "4",
           "--seed", seed, "--out", str(out / "cv"), *tiny])
    print(f"\nartifacts under {out}/")


if __name__ == "__main__":
    main()
