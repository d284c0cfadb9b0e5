"""Metrics and evaluation protocol: per-class and macro F1, confidence RMSE,
topic-grouped k-fold cross validation, and repeated-run statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .models import SdqcEstimate, VeracityEstimate
from .thread_model import SDQC_LABELS, VERACITY_LABELS, Dataset, Platform, Thread

RMSE_DEFINITION = "sqrt(mean(err^2)) with err = 1 - confidence if predicted label matches gold else confidence"


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are gold classes, columns predicted classes."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        k = len(self.labels)
        if self.counts.shape != (k, k):
            raise ValueError(f"expected a {k}x{k} matrix, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")

    @classmethod
    def from_labels(cls, gold: Sequence[str], predicted: Sequence[str], labels: Sequence[str]) -> "ConfusionMatrix":
        if len(gold) != len(predicted):
            raise ValueError(f"{len(gold)} gold labels against {len(predicted)} predictions")
        index = {label: i for i, label in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for g, p in zip(gold, predicted):
            counts[index[g], index[p]] += 1
        return cls(labels=tuple(labels), counts=counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class F1Scores:
    per_class: dict[str, float]
    macro: float
    absent_classes: tuple[str, ...]


def f1_scores(cm: ConfusionMatrix) -> F1Scores:
    """Per-class F1 with the zero-denominator-means-zero convention, plus the
    unweighted macro average; classes absent from both gold and predictions
    are reported so the zeros are visible."""
    diag = np.diag(cm.counts).astype(float)
    gold_totals = cm.counts.sum(axis=1).astype(float)
    pred_totals = cm.counts.sum(axis=0).astype(float)
    per_class = {}
    absent = []
    for i, label in enumerate(cm.labels):
        precision = diag[i] / pred_totals[i] if pred_totals[i] > 0 else 0.0
        recall = diag[i] / gold_totals[i] if gold_totals[i] > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[label] = f1
        if gold_totals[i] == 0 and pred_totals[i] == 0:
            absent.append(label)
    macro = float(np.mean(list(per_class.values())))
    return F1Scores(per_class=per_class, macro=macro, absent_classes=tuple(absent))


def rmse(estimates: Sequence[VeracityEstimate], gold: Sequence[str]) -> float:
    """Root mean squared confidence error: err = 1 - confidence when the
    predicted label matches gold, confidence otherwise."""
    if len(estimates) != len(gold):
        raise ValueError(f"{len(estimates)} estimates against {len(gold)} gold labels")
    errs = np.array(
        [1.0 - e.confidence if e.label == g else e.confidence for e, g in zip(estimates, gold)]
    )
    return float(np.sqrt(np.mean(errs**2)))


@dataclass(frozen=True)
class EvalReport:
    per_class_f1: dict[str, float]
    macro_f1: float
    n_items: int
    split: str
    rmse: float | None = None

    def __post_init__(self):
        scores = list(self.per_class_f1.values()) + [self.macro_f1]
        if any(s < 0 or s > 1 for s in scores):
            raise ValueError("F1 scores must lie in [0, 1]")

    def metrics(self) -> dict[str, float]:
        out = {f"f1_{label}": score for label, score in self.per_class_f1.items()}
        out["macro_f1"] = self.macro_f1
        if self.rmse is not None:
            out["rmse"] = self.rmse
        return out


def evaluate_stance(estimates: Sequence[SdqcEstimate], dataset: Dataset) -> EvalReport:
    """Score stance estimates against the labelled posts of a dataset."""
    by_id = {e.post_id: e for e in estimates}
    gold, predicted = [], []
    for post in dataset.posts:
        if post.sdqc_label is None:
            continue
        if post.id not in by_id:
            raise KeyError(f"no stance estimate for post {post.id}")
        gold.append(post.sdqc_label)
        predicted.append(by_id[post.id].label)
    scores = f1_scores(ConfusionMatrix.from_labels(gold, predicted, SDQC_LABELS))
    return EvalReport(per_class_f1=scores.per_class, macro_f1=scores.macro, n_items=len(gold), split=dataset.split)


def evaluate_veracity(estimates: Sequence[VeracityEstimate], dataset: Dataset) -> EvalReport:
    """Score veracity estimates against the labelled threads of a dataset."""
    by_id = {e.thread_id: e for e in estimates}
    gold, picked = [], []
    for thread in dataset.threads:
        if thread.veracity_label is None:
            continue
        if thread.id not in by_id:
            raise KeyError(f"no veracity estimate for thread {thread.id}")
        gold.append(thread.veracity_label)
        picked.append(by_id[thread.id])
    scores = f1_scores(ConfusionMatrix.from_labels(gold, [e.label for e in picked], VERACITY_LABELS))
    return EvalReport(
        per_class_f1=scores.per_class,
        macro_f1=scores.macro,
        n_items=len(gold),
        split=dataset.split,
        rmse=rmse(picked, gold),
    )


# ---------------------------------------------------------------------------
# grouped cross validation


@dataclass(frozen=True)
class FoldAssignment:
    """Thread to fold mapping; a Twitter topic or a Reddit thread never spans
    two folds."""

    k: int
    by_thread: dict[str, int]

    def __post_init__(self):
        bad = {t: f for t, f in self.by_thread.items() if not 0 <= f < self.k}
        if bad:
            raise ValueError(f"fold indices outside [0, {self.k}): {bad}")

    def fold_of(self, thread_id: str) -> int:
        return self.by_thread[thread_id]

    def threads_in(self, fold: int) -> tuple[str, ...]:
        return tuple(t for t, f in self.by_thread.items() if f == fold)


def _group_key(thread: Thread) -> tuple[str, str]:
    if thread.source.platform is Platform.TWITTER:
        if thread.source.topic is None:
            raise FoldError(f"Twitter thread {thread.id} has no topic label")
        return ("topic", thread.source.topic)
    return ("thread", thread.id)


def grouped_kfold(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Greedy balanced assignment of groups (Twitter topic, or single Reddit
    thread) to k folds, minimizing post-count imbalance; equal-sized groups
    are ordered by the seeded shuffle, so the split is deterministic per seed."""
    if k < 2:
        raise FoldError(f"need at least 2 folds, got {k}")
    groups: dict[tuple[str, str], list[Thread]] = {}
    for thread in dataset.threads:
        groups.setdefault(_group_key(thread), []).append(thread)
    if len(groups) < k:
        raise FoldError(f"{len(groups)} groups cannot fill {k} folds")
    keys = list(groups)
    rng = np.random.default_rng(seed)
    shuffled = [keys[i] for i in rng.permutation(len(keys))]
    ordered = sorted(shuffled, key=lambda g: -sum(len(t.posts) for t in groups[g]))
    fold_loads = [0] * k
    by_thread: dict[str, int] = {}
    for key in ordered:
        fold = int(np.argmin(fold_loads))
        for thread in groups[key]:
            by_thread[thread.id] = fold
        fold_loads[fold] += sum(len(t.posts) for t in groups[key])
    return FoldAssignment(k=k, by_thread=by_thread)


def split_by_fold(dataset: Dataset, assignment: FoldAssignment, fold: int) -> tuple[Dataset, Dataset]:
    """Train/held-out datasets for one fold; the held-out part is tagged test."""
    held = tuple(t for t in dataset.threads if assignment.fold_of(t.id) == fold)
    rest = tuple(t for t in dataset.threads if assignment.fold_of(t.id) != fold)
    return Dataset(threads=rest, split="train"), Dataset(threads=held, split="test")


# ---------------------------------------------------------------------------
# repeated runs


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    values: tuple[float, ...]


def repeated_runs(run_fn: Callable[[int], Mapping[str, float]], seeds: Sequence[int]) -> dict[str, MetricSummary]:
    """Mean and sample standard deviation of every metric the run function
    reports, over one run per seed."""
    if len(seeds) < 2:
        raise ValueError("repeated-run statistics need at least 2 runs")
    runs = [dict(run_fn(seed)) for seed in seeds]
    keys = list(runs[0])
    for r in runs[1:]:
        if list(r) != keys:
            raise ValueError(f"runs reported different metrics: {keys} vs {list(r)}")
    out = {}
    for key in keys:
        values = tuple(float(r[key]) for r in runs)
        out[key] = MetricSummary(mean=float(np.mean(values)), std=float(np.std(values, ddof=1)), values=values)
    return out


def summarize_single_runs(metrics: Mapping[str, float]) -> dict[str, MetricSummary]:
    return {k: MetricSummary(mean=float(v), std=0.0, values=(float(v),)) for k, v in metrics.items()}


# ---------------------------------------------------------------------------
# rendering


def _format_metric(name: str, summary: MetricSummary) -> str:
    if name.endswith("rmse"):
        return f"{summary.mean:.3f} ± {summary.std:.3f}"
    return f"{summary.mean * 100:.1f} ± {summary.std * 100:.1f}"


def render_table(stats: Mapping[str, MetricSummary], title: str) -> str:
    """Human-readable score table; F1 scores are multiplied by 100 and shown
    with one decimal, RMSE stays on its natural scale."""
    width = max(len(name) for name in stats) if stats else 0
    lines = [title, "-" * len(title)]
    lines += [f"{name.ljust(width)}  {_format_metric(name, summary)}" for name, summary in stats.items()]
    if any(name.endswith("rmse") for name in stats):
        lines.append(f"rmse formula: {RMSE_DEFINITION}")
    return "\n".join(lines)


def report_payload(stats: Mapping[str, MetricSummary], **context) -> dict:
    """Machine-readable report body; keys are sorted on serialization so the
    same inputs give byte-identical files."""
    payload = dict(context)
    payload["metrics"] = {
        name: {"mean": s.mean, "std": s.std, "values": list(s.values)} for name, s in stats.items()
    }
    if any(name.endswith("rmse") for name in stats):
        payload["rmse_definition"] = RMSE_DEFINITION
    return payload


def dump_report(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
