"""Shared builders for synthetic datasets used across the test suite."""

from __future__ import annotations

import numpy as np

from rumorpipe.thread_model import Dataset, Platform, Post, Thread

STANCE_WORDS = ("agree", "nope", "really", "meh")


def make_post(
    post_id: str,
    thread_id: str,
    parent_id: str | None = None,
    platform: Platform = Platform.TWITTER,
    raw_text: str = "hello world",
    **kwargs,
) -> Post:
    return Post(
        id=post_id,
        thread_id=thread_id,
        parent_id=parent_id,
        platform=platform,
        raw_text=raw_text,
        **kwargs,
    )


def make_thread(
    thread_id: str,
    n_direct: int = 2,
    n_nested: int = 0,
    platform: Platform = Platform.TWITTER,
    topic: str | None = "topic-0",
    veracity_label: str | None = None,
    labels: tuple[str | None, ...] | None = None,
    texts: tuple[str, ...] | None = None,
) -> Thread:
    if platform is Platform.REDDIT:
        topic = None
    n_posts = 1 + n_direct + n_nested
    labels = labels if labels is not None else (None,) * n_posts
    texts = texts if texts is not None else tuple(f"post number {i}" for i in range(n_posts))
    source = make_post(
        f"{thread_id}-p0",
        thread_id,
        platform=platform,
        raw_text=texts[0],
        sdqc_label=labels[0],
        topic=topic,
        follower_count=100,
        following_count=50,
    )
    replies = []
    for i in range(n_direct):
        replies.append(
            make_post(
                f"{thread_id}-p{i + 1}",
                thread_id,
                parent_id=source.id,
                platform=platform,
                raw_text=texts[i + 1],
                sdqc_label=labels[i + 1],
                topic=topic,
                follower_count=10 * (i + 1),
                following_count=5,
            )
        )
    for i in range(n_nested):
        j = 1 + n_direct + i
        replies.append(
            make_post(
                f"{thread_id}-p{j}",
                thread_id,
                parent_id=replies[0].id,
                platform=platform,
                raw_text=texts[j],
                sdqc_label=labels[j],
                topic=topic,
                follower_count=7,
                following_count=3,
            )
        )
    return Thread(source=source, replies=tuple(replies), veracity_label=veracity_label)


def separable_stance_dataset() -> Dataset:
    """32 posts in 8 threads; each thread holds one post per stance class and
    every class announces itself through a dedicated token, so the fake
    embeddings make the classes linearly separable."""
    from rumorpipe.thread_model import SDQC_LABELS

    threads = []
    for t in range(8):
        texts = tuple(f"{STANCE_WORDS[c]} {STANCE_WORDS[c]} marker{t}" for c in range(4))
        threads.append(
            make_thread(
                f"th{t}",
                n_direct=2,
                n_nested=1,
                topic=f"topic-{t}",
                labels=tuple(SDQC_LABELS),
                texts=texts,
            )
        )
    return Dataset(threads=tuple(threads), split="train")


VERACITY_PROFILE = {
    "true": (0.7, 0.1, 0.1, 0.1),
    "false": (0.1, 0.7, 0.1, 0.1),
    "unverified": (0.1, 0.1, 0.7, 0.1),
}


def separable_veracity_dataset() -> tuple[Dataset, dict[str, tuple[float, ...]]]:
    """8 labelled threads whose stance-estimate profiles separate the three
    veracity classes, plus the matching estimate map."""
    labels = ("true", "true", "true", "false", "false", "false", "unverified", "unverified")
    threads = []
    estimates: dict[str, tuple[float, ...]] = {}
    for t, label in enumerate(labels):
        platform = Platform.TWITTER if t % 2 == 0 else Platform.REDDIT
        thread = make_thread(
            f"vth{t}",
            n_direct=1 + t % 3,
            n_nested=t % 2,
            platform=platform,
            topic=f"vtopic-{t}",
            veracity_label=label,
        )
        threads.append(thread)
        for post in thread.posts:
            estimates[post.id] = VERACITY_PROFILE[label]
    return Dataset(threads=tuple(threads), split="train"), estimates


def random_grouped_dataset(rng: np.random.Generator, min_topics: int = 12) -> Dataset:
    """Random mixture of multi-thread Twitter topics and single Reddit threads
    for fold-assignment properties."""
    threads = []
    n_topics = int(rng.integers(min_topics, min_topics + 10))
    serial = 0
    for topic_no in range(n_topics):
        for _ in range(int(rng.integers(1, 3))):
            n_direct = int(rng.integers(0, 3))
            threads.append(
                make_thread(
                    f"tw{serial}",
                    n_direct=n_direct,
                    n_nested=int(rng.integers(0, 2)) if n_direct else 0,
                    topic=f"topic-{topic_no}",
                )
            )
            serial += 1
    for _ in range(int(rng.integers(8, 16))):
        n_direct = int(rng.integers(0, 3))
        threads.append(
            make_thread(
                f"rd{serial}",
                n_direct=n_direct,
                n_nested=int(rng.integers(0, 2)) if n_direct else 0,
                platform=Platform.REDDIT,
            )
        )
        serial += 1
    return Dataset(threads=tuple(threads), split="train")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome, status in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL"), ("skipped", "SKIP")):
        for report in terminalreporter.stats.get(outcome, ()):
            if "test_acceptance" in report.nodeid:
                lines.append((report.nodeid.split("::")[-1], status))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"ACCEPTANCE {status}: {name}")
