"""Confusion accounting, derived metrics, stratified folds, cross-validation.

Metrics with a zero denominator are reported as None rather than silently
coerced, and excluded from fold aggregates.
"""

from __future__ import annotations

import json
import statistics
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DatasetError
from .scan import PairExample

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "f_measure", "ppv", "npv")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(preds: Sequence[int], labels: Sequence[int]) -> ConfusionCounts:
    """Count the four confusion cells; TP means predicted 1 with label 1."""
    if len(preds) != len(labels):
        raise DatasetError(f"{len(preds)} predictions vs {len(labels)} labels")
    if len(preds) == 0:
        raise DatasetError("cannot build a confusion matrix from zero examples")
    tp = fp = fn = tn = 0
    for p, y in zip(preds, labels):
        if p not in (0, 1) or y not in (0, 1):
            raise DatasetError(f"predictions and labels must be 0/1, got ({p}, {y})")
        if p == 1 and y == 1:
            tp += 1
        elif p == 1 and y == 0:
            fp += 1
        elif p == 0 and y == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


@dataclass(frozen=True)
class MetricsReport:
    """The six derived metrics; None marks an undefined (0/0) value."""

    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    f_measure: float | None
    ppv: float | None
    npv: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def metrics(c: ConfusionCounts) -> MetricsReport:
    if c.total < 1:
        raise DatasetError("metrics need at least one counted example")
    return MetricsReport(
        accuracy=_ratio(c.tp + c.tn, c.total),
        sensitivity=_ratio(c.tp, c.tp + c.fn),
        specificity=_ratio(c.tn, c.tn + c.fp),
        f_measure=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        ppv=_ratio(c.tp, c.tp + c.fp),
        npv=_ratio(c.tn, c.tn + c.fn),
    )


@dataclass(frozen=True)
class FoldPlan:
    """Disjoint train/test index splits, stratified by label."""

    k: int
    seed: int
    folds: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]  # (train, test)


def stratified_folds(labels: Sequence[int], k: int, seed: int) -> FoldPlan:
    """Partition indices into k folds with per-class counts balanced to 1.

    Within each class the (seeded) shuffled indices are dealt round-robin,
    so every fold's class ratio stays within one example of the global one.
    """
    if k < 2:
        raise DatasetError(f"need at least 2 folds, got {k}")
    labels = [int(y) for y in labels]
    by_class: dict[int, list[int]] = {0: [], 1: []}
    for i, y in enumerate(labels):
        if y not in (0, 1):
            raise DatasetError(f"labels must be 0/1, got {y}")
        by_class[y].append(i)
    rng = np.random.default_rng(seed)
    test_sets: list[list[int]] = [[] for _ in range(k)]
    for y in (0, 1):
        members = by_class[y]
        if 0 < len(members) < k:
            raise DatasetError(
                f"class {y} has {len(members)} members, fewer than {k} folds")
        order = rng.permutation(len(members))
        for j, pos in enumerate(order):
            test_sets[j % k].append(members[pos])
    all_indices = set(range(len(labels)))
    folds = []
    for test in test_sets:
        test_sorted = tuple(sorted(test))
        train_sorted = tuple(sorted(all_indices - set(test)))
        folds.append((train_sorted, test_sorted))
    return FoldPlan(k=k, seed=seed, folds=tuple(folds))


# fit(train_examples, fold_seed) -> predict(test_examples) -> labels
FitFunction = Callable[[Sequence[PairExample], int], Callable[[Sequence[PairExample]], Sequence[int]]]


@dataclass
class CrossValidationReport:
    per_fold: list[MetricsReport | None]     # None marks a failed fold
    fold_errors: list[str | None]
    mean: MetricsReport
    median: MetricsReport

    def to_json(self) -> str:
        payload = {
            "folds": [(r.as_dict() if r is not None else None) for r in self.per_fold],
            "fold_errors": self.fold_errors,
            "mean": self.mean.as_dict(),
            "median": self.median.as_dict(),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        for i, rep in enumerate(self.per_fold):
            if rep is None:
                lines.append(f"fold {i}: FAILED ({self.fold_errors[i]})")
                continue
            vals = " ".join(f"{name}={_fmt(v)}" for name, v in rep.as_dict().items())
            lines.append(f"fold {i}: {vals}")
        for label, rep in (("mean", self.mean), ("median", self.median)):
            vals = " ".join(f"{name}={_fmt(v)}" for name, v in rep.as_dict().items())
            lines.append(f"{label}: {vals}")
        return "\n".join(lines) + "\n"


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _aggregate(reports: list[MetricsReport], fn) -> MetricsReport:
    values = {}
    for name in METRIC_NAMES:
        defined = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        values[name] = fn(defined) if defined else None
    return MetricsReport(**values)


def _run_fold(dataset, plan_fold, fold_id, seed, fit):
    train_idx, test_idx = plan_fold
    train = [dataset[i] for i in train_idx]
    test = [dataset[i] for i in test_idx]
    fold_seed = int(np.random.SeedSequence((seed, fold_id)).generate_state(1)[0])
    predictor = fit(train, fold_seed)
    preds = [int(p) for p in predictor(test)]
    return metrics(confusion(preds, [ex.label for ex in test]))


def cross_validate(dataset: Sequence[PairExample], k: int, seed: int,
                   fit: FitFunction, workers: int = 1) -> CrossValidationReport:
    """Train on each fold's train split, score its test split, aggregate.

    ``fit`` receives the train examples and a fold-specific seed and returns
    a predictor mapping examples to 0/1 labels. A fold whose training raises
    is annotated and left out of the mean/median aggregates. With workers > 1
    fold jobs run on a bounded thread pool; per-fold seeds keep the result
    independent of scheduling.
    """
    labels = [ex.label for ex in dataset]
    plan = stratified_folds(labels, k, seed)
    per_fold: list[MetricsReport | None] = [None] * k
    errors: list[str | None] = [None] * k

    def attempt(fold_id: int):
        try:
            per_fold[fold_id] = _run_fold(dataset, plan.folds[fold_id], fold_id,
                                          seed, fit)
        except Exception as exc:  # annotated, not fatal
            warnings.warn(f"fold {fold_id} failed: {exc}")
            errors[fold_id] = str(exc)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(workers, k)) as pool:
            list(pool.map(attempt, range(k)))
    else:
        for fold_id in range(k):
            attempt(fold_id)
    completed = [r for r in per_fold if r is not None]
    if not completed:
        raise DatasetError("every cross-validation fold failed")
    return CrossValidationReport(
        per_fold=per_fold,
        fold_errors=errors,
        mean=_aggregate(completed, statistics.fmean),
        median=_aggregate(completed, statistics.median),
    )
