"""Conversation data model: posts, threads, datasets, and JSON Lines ingestion.

A dataset file holds one post record per line (UTF-8 JSON). Required keys:
``id``, ``thread_id``, ``parent_id`` (null for source posts), ``platform``
("twitter" or "reddit"), ``text``. Optional keys: ``user_verified``,
``follower_count``, ``following_count``, ``has_image``, ``has_url``,
``upvote_ratio``, ``sdqc_label``, ``veracity_label``, ``topic``. Unknown keys
are ignored. Threads are reconstructed from parent links; reply order within
a thread is file order.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

SDQC_LABELS = ("support", "deny", "query", "comment")
VERACITY_LABELS = ("true", "false", "unverified")


class ParseError(ValueError):
    """A line of the input file is not a well-formed post record."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class IntegrityError(ValueError):
    """Post records are individually well-formed but mutually inconsistent."""


class Platform(enum.Enum):
    TWITTER = "twitter"
    REDDIT = "reddit"

    def serialize(self) -> str:
        return self.value


class PostDepth(enum.Enum):
    SOURCE = "source"
    DIRECT_REPLY = "direct_reply"
    NESTED_REPLY = "nested_reply"


@dataclass(frozen=True)
class Post:
    id: str
    thread_id: str
    parent_id: Optional[str]
    platform: Platform
    raw_text: str
    user_verified: bool = False
    follower_count: int = 0
    following_count: int = 0
    has_image: bool = False
    has_url: bool = False
    upvote_ratio: Optional[float] = None
    sdqc_label: Optional[str] = None
    topic: Optional[str] = None

    def __post_init__(self):
        if self.follower_count < 0 or self.following_count < 0:
            raise ValueError(f"post {self.id}: negative follower/following count")
        if self.upvote_ratio is not None:
            if self.platform is not Platform.REDDIT:
                raise ValueError(f"post {self.id}: upvote_ratio on a non-Reddit post")
            if not 0.0 <= self.upvote_ratio <= 1.0:
                raise ValueError(f"post {self.id}: upvote_ratio outside [0,1]")
        if self.sdqc_label is not None and self.sdqc_label not in SDQC_LABELS:
            raise ValueError(f"post {self.id}: unknown sdqc_label {self.sdqc_label!r}")

    @property
    def is_source(self) -> bool:
        return self.parent_id is None


@dataclass(frozen=True)
class Thread:
    source: Post
    replies: tuple[Post, ...]
    veracity_label: Optional[str] = None

    def __post_init__(self):
        if self.source.parent_id is not None:
            raise ValueError(f"thread source {self.source.id} has a parent_id")
        if self.veracity_label is not None and self.veracity_label not in VERACITY_LABELS:
            raise ValueError(f"thread {self.id}: unknown veracity_label {self.veracity_label!r}")

    @property
    def id(self) -> str:
        return self.source.thread_id

    @property
    def posts(self) -> tuple[Post, ...]:
        return (self.source,) + self.replies

    def post_by_id(self, post_id: str) -> Post:
        for p in self.posts:
            if p.id == post_id:
                return p
        raise KeyError(f"post {post_id} not in thread {self.id}")


@dataclass(frozen=True)
class Dataset:
    threads: tuple[Thread, ...]
    split: str

    def __post_init__(self):
        if self.split not in ("train", "dev", "test"):
            raise ValueError(f"unknown split tag {self.split!r}")

    @property
    def posts(self) -> Iterator[Post]:
        for t in self.threads:
            yield from t.posts

    def thread_of(self, post: Post) -> Thread:
        for t in self.threads:
            if t.id == post.thread_id:
                return t
        raise KeyError(f"no thread {post.thread_id} in dataset")


@dataclass
class LoadReport:
    """Non-fatal irregularities observed while loading a dataset file."""

    flagged: list[str] = field(default_factory=list)

    def flag(self, line_no: int, message: str) -> None:
        self.flagged.append(f"line {line_no}: {message}")


def _parse_record(obj: dict, line_no: int, report: LoadReport) -> tuple[Post, Optional[str]]:
    """Build a Post from one decoded JSON record; returns (post, veracity_label)."""
    for key in ("id", "thread_id", "platform", "text"):
        if key not in obj:
            raise ParseError(line_no, f"missing required key {key!r}")
    if "parent_id" not in obj:
        raise ParseError(line_no, "missing required key 'parent_id'")
    try:
        platform = Platform(obj["platform"])
    except ValueError:
        raise ParseError(line_no, f"unknown platform {obj['platform']!r}") from None

    post_id = obj["id"]
    if not isinstance(post_id, str) or not post_id:
        raise ParseError(line_no, "'id' must be a non-empty string")

    missing_meta = [k for k in ("user_verified", "follower_count", "following_count") if k not in obj]
    if missing_meta:
        report.flag(line_no, f"post {post_id}: missing user metadata {missing_meta}, using defaults")

    upvote_ratio = obj.get("upvote_ratio")
    if upvote_ratio is not None and platform is not Platform.REDDIT:
        report.flag(line_no, f"post {post_id}: upvote_ratio on a Twitter post, dropped")
        upvote_ratio = None

    veracity = obj.get("veracity_label")
    if veracity is not None and veracity not in VERACITY_LABELS:
        raise ParseError(line_no, f"unknown veracity_label {veracity!r}")

    try:
        post = Post(
            id=post_id,
            thread_id=obj["thread_id"],
            parent_id=obj["parent_id"],
            platform=platform,
            raw_text=obj["text"],
            user_verified=bool(obj.get("user_verified", False)),
            follower_count=int(obj.get("follower_count", 0)),
            following_count=int(obj.get("following_count", 0)),
            has_image=bool(obj.get("has_image", False)),
            has_url=bool(obj.get("has_url", False)),
            upvote_ratio=upvote_ratio,
            sdqc_label=obj.get("sdqc_label"),
            topic=obj.get("topic"),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(line_no, str(exc)) from None
    return post, veracity


def _build_thread(posts: list[Post], veracities: dict[str, str], by_id: dict[str, Post]) -> Thread:
    thread_id = posts[0].thread_id
    sources = [p for p in posts if p.parent_id is None]
    if len(sources) != 1:
        raise IntegrityError(f"thread {thread_id}: expected exactly 1 source post, found {len(sources)}")
    source = sources[0]
    replies = tuple(p for p in posts if p.parent_id is not None)
    ids_here = {p.id for p in posts}
    for p in replies:
        if p.parent_id not in by_id:
            raise IntegrityError(f"post {p.id}: dangling parent_id {p.parent_id}")
        if p.parent_id not in ids_here:
            raise IntegrityError(f"post {p.id}: parent {p.parent_id} is in a different thread")
        # walk the parent chain; must terminate at the source without cycles
        seen = {p.id}
        cur = p
        while cur.parent_id is not None:
            if cur.parent_id in seen:
                raise IntegrityError(f"post {p.id}: parent chain contains a cycle")
            seen.add(cur.parent_id)
            cur = by_id[cur.parent_id]
        if cur.id != source.id:
            raise IntegrityError(f"post {p.id}: parent chain does not end at source {source.id}")
    return Thread(source=source, replies=replies, veracity_label=veracities.get(source.id))


def load_dataset_with_report(path: str | Path, split: str) -> tuple[Dataset, LoadReport]:
    """Load a JSON Lines dataset file, returning the dataset and a load report."""
    report = LoadReport()
    posts_in_order: list[Post] = []
    veracities: dict[str, str] = {}
    by_id: dict[str, Post] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(line_no, "record is not a JSON object")
            post, veracity = _parse_record(obj, line_no, report)
            if post.id in by_id:
                raise IntegrityError(f"duplicate post id {post.id}")
            by_id[post.id] = post
            posts_in_order.append(post)
            if veracity is not None:
                if post.parent_id is not None:
                    report.flag(line_no, f"post {post.id}: veracity_label on a reply, dropped")
                else:
                    veracities[post.id] = veracity

    grouped: dict[str, list[Post]] = {}
    thread_order: list[str] = []
    for post in posts_in_order:
        if post.thread_id not in grouped:
            grouped[post.thread_id] = []
            thread_order.append(post.thread_id)
        grouped[post.thread_id].append(post)

    threads = tuple(_build_thread(grouped[tid], veracities, by_id) for tid in thread_order)
    return Dataset(threads=threads, split=split), report


def load_dataset(path: str | Path, split: str) -> Dataset:
    return load_dataset_with_report(path, split)[0]


def post_depth(post: Post, thread: Thread) -> PostDepth:
    """Classify a post as source, direct reply, or nested reply within its thread."""
    if post.id not in {p.id for p in thread.posts}:
        raise KeyError(f"post {post.id} not in thread {thread.id}")
    if post.parent_id is None:
        return PostDepth.SOURCE
    parent = thread.post_by_id(post.parent_id)
    if parent.parent_id is None:
        return PostDepth.DIRECT_REPLY
    return PostDepth.NESTED_REPLY


def post_to_record(post: Post, veracity_label: Optional[str] = None) -> dict:
    """Serialize a post back to its JSON Lines record form."""
    record = {
        "id": post.id,
        "thread_id": post.thread_id,
        "parent_id": post.parent_id,
        "platform": post.platform.serialize(),
        "text": post.raw_text,
        "user_verified": post.user_verified,
        "follower_count": post.follower_count,
        "following_count": post.following_count,
        "has_image": post.has_image,
        "has_url": post.has_url,
    }
    if post.upvote_ratio is not None:
        record["upvote_ratio"] = post.upvote_ratio
    if post.sdqc_label is not None:
        record["sdqc_label"] = post.sdqc_label
    if post.topic is not None:
        record["topic"] = post.topic
    if veracity_label is not None:
        record["veracity_label"] = veracity_label
    return record


def serialize_dataset(dataset: Dataset) -> list[dict]:
    records = []
    for thread in dataset.threads:
        records.append(post_to_record(thread.source, thread.veracity_label))
        records.extend(post_to_record(p) for p in thread.replies)
    return records


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in serialize_dataset(dataset):
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def class_counts(dataset: Dataset) -> dict:
    """Per-platform SDQC counts and (source-level) veracity counts.

    Returns ``{"sdqc": {platform: {label: n}}, "veracity": {platform: {label: n}}}``
    with zero-initialized label maps.
    """
    sdqc = {p.value: {lab: 0 for lab in SDQC_LABELS} for p in Platform}
    veracity = {p.value: {lab: 0 for lab in VERACITY_LABELS} for p in Platform}
    for thread in dataset.threads:
        if thread.veracity_label is not None:
            veracity[thread.source.platform.value][thread.veracity_label] += 1
        for post in thread.posts:
            if post.sdqc_label is not None:
                sdqc[post.platform.value][post.sdqc_label] += 1
    return {"sdqc": sdqc, "veracity": veracity}


def total_counts(counts: dict) -> dict:
    """Collapse per-platform counts from class_counts into overall label totals."""
    totals: dict[str, dict[str, int]] = {}
    for section, per_platform in counts.items():
        merged: dict[str, int] = {}
        for label_map in per_platform.values():
            for label, n in label_map.items():
                merged[label] = merged.get(label, 0) + n
        totals[section] = merged
    return totals
