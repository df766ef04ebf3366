"""Evaluation harness: metrics, splits, cross-validation, feature study, kappa.

The experiment pipeline is: label threads, truncate staff content, drop
threads left with no observable content, then evaluate with per-course
ten-fold CV or leave-one-course-out CV. Every fold fits its vocabulary and
scaler on training rows only and tunes the class weight W on an inner 75/25
fit/validation split of the training portion. Courses whose training data
collapses to a single class fall back to a constant predictor with W = 1.
"""

from __future__ import annotations

import json
import math
import random
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .corpus import (Corpus, Course, Thread, is_observable, label_thread,
                     min_duplicates_for_density,
                     truncate_at_first_intervention)
from .features import ALL_FEATURES, CorpusMatrix, FEATURE_GROUPS
from .model import (TrainConfig, predict_labels, train, tune_class_weight)
from .textprep import TextPrepConfig

# ---------------------------------------------------------------------------
# Metrics

@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall,
                "f1": self.f1}


def compute_metrics(predicted: Sequence[bool], gold: Sequence[bool]) -> Metrics:
    """Confusion counts plus precision/recall/F1 with zero-denominator → 0."""
    if len(predicted) != len(gold):
        raise ValueError(
            f"{len(predicted)} predictions for {len(gold)} gold labels")
    if not gold:
        raise ValueError("cannot compute metrics on zero instances")
    tp = fp = fn = tn = 0
    for pred, actual in zip(predicted, gold):
        if pred and actual:
            tp += 1
        elif pred and not actual:
            fp += 1
        elif not pred and actual:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp, fp, fn, tn, precision, recall, f1)


def all_positive_baseline(gold: Sequence[bool]) -> Metrics:
    """Metrics of the constant-positive predictor: 100% recall, F1 = 2p/(1+p)."""
    return compute_metrics([True] * len(gold), gold)


def weighted_macro(values: Sequence[float], weights: Sequence[int]) -> float:
    """Σ (weightᵢ / Σweights) · valueᵢ."""
    if len(values) != len(weights):
        raise ValueError("values and weights differ in length")
    total = sum(weights)
    if total <= 0:
        raise ValueError("total weight must be positive")
    return sum((w / total) * v for v, w in zip(values, weights))


def mean_metrics(metrics: Sequence[Metrics]) -> dict[str, float]:
    """Plain per-fold averages of precision, recall, and F1."""
    if not metrics:
        raise ValueError("no metrics to average")
    n = len(metrics)
    return {
        "precision": sum(m.precision for m in metrics) / n,
        "recall": sum(m.recall for m in metrics) / n,
        "f1": sum(m.f1 for m in metrics) / n,
    }


def pooled_metrics(metrics: Sequence[Metrics]) -> Metrics:
    """Metrics recomputed from summed confusion counts (the pooling view)."""
    if not metrics:
        raise ValueError("no metrics to pool")
    tp = sum(m.tp for m in metrics)
    fp = sum(m.fp for m in metrics)
    fn = sum(m.fn for m in metrics)
    tn = sum(m.tn for m in metrics)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp, fp, fn, tn, precision, recall, f1)


# ---------------------------------------------------------------------------
# Splits

def stratified_split(labels: Sequence[bool], test_frac: float,
                     seed: int | str) -> tuple[np.ndarray, np.ndarray]:
    """Seeded stratified index split; returns (train_idx, test_idx), sorted.

    Each class is split separately so both partitions see positives whenever
    the input has at least two of them; a lone member of a class stays in the
    training partition.
    """
    if not 0.0 < test_frac < 1.0:
        raise ValueError(f"test fraction must be in (0, 1), got {test_frac}")
    rng = random.Random(seed)
    train: list[int] = []
    test: list[int] = []
    for cls in (False, True):
        idx = [i for i, lab in enumerate(labels) if bool(lab) == cls]
        rng.shuffle(idx)
        n_test = round(len(idx) * test_frac)
        if len(idx) >= 2:
            n_test = min(max(n_test, 1), len(idx) - 1)
        else:
            n_test = 0
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.array(sorted(train), dtype=np.intp), np.array(sorted(test), dtype=np.intp)


def split_course(course: Course, train_frac: float = 0.8,
                 seed: int | str = 0) -> tuple[list[Thread], list[Thread]]:
    """Stratified train/test split of one course's threads."""
    if len(course.threads) < 5:
        raise ValueError(
            f"course {course.id!r} has only {len(course.threads)} threads; need >= 5")
    labels = [label_thread(t) for t in course.threads]
    train_idx, test_idx = stratified_split(labels, 1.0 - train_frac, seed)
    return ([course.threads[i] for i in train_idx],
            [course.threads[i] for i in test_idx])


def stratified_kfold(labels: Sequence[bool], k: int,
                     seed: int | str) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded stratified k folds partitioning all indices exactly once."""
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if len(labels) < k:
        raise ValueError(f"{len(labels)} instances cannot fill {k} folds")
    rng = random.Random(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    position = 0
    for cls in (False, True):
        idx = [i for i, lab in enumerate(labels) if bool(lab) == cls]
        rng.shuffle(idx)
        for i in idx:
            folds[position % k].append(i)
            position += 1
    splits = []
    for j in range(k):
        test = sorted(folds[j])
        train = sorted(i for f in range(k) if f != j for i in folds[f])
        splits.append((np.array(train, dtype=np.intp),
                       np.array(test, dtype=np.intp)))
    return splits


# ---------------------------------------------------------------------------
# Prepared corpus

@dataclass(frozen=True)
class PreparedCorpus:
    """Truncated observable threads with labels and precomputed token counts."""

    threads: tuple[Thread, ...]
    labels: np.ndarray
    course_ids: tuple[str, ...]
    matrix: CorpusMatrix
    n_excluded: int

    @property
    def thread_ids(self) -> tuple[str, ...]:
        return self.matrix.thread_ids

    def rows_by_course(self) -> dict[str, np.ndarray]:
        rows: dict[str, list[int]] = {}
        for i, cid in enumerate(self.course_ids):
            rows.setdefault(cid, []).append(i)
        return {cid: np.array(r, dtype=np.intp) for cid, r in rows.items()}


def prepare_corpus(corpus: Corpus,
                   config: TextPrepConfig | None = None) -> PreparedCorpus:
    """Label, truncate, and vectorize every observable thread."""
    threads: list[Thread] = []
    labels: list[bool] = []
    course_ids: list[str] = []
    n_excluded = 0
    for course in corpus.courses:
        for thread in course.threads:
            label = label_thread(thread)
            truncated = truncate_at_first_intervention(thread)
            if not is_observable(truncated):
                n_excluded += 1
                continue
            threads.append(truncated)
            labels.append(label)
            course_ids.append(course.id)
    if not threads:
        raise ValueError("corpus has no observable threads after truncation")
    return PreparedCorpus(
        threads=tuple(threads),
        labels=np.array(labels, dtype=bool),
        course_ids=tuple(course_ids),
        matrix=CorpusMatrix(threads, config),
        n_excluded=n_excluded,
    )


# ---------------------------------------------------------------------------
# Fold execution

@dataclass(frozen=True)
class EvalConfig:
    """Experiment-wide settings shared by cv/loocv/feature-study runs.

    Tuning runs use a lighter solver budget (``tune_max_iters``,
    ``tune_tolerance``) than the final per-fold fit; both budgets are
    deterministic, so reports stay reproducible.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    w_min: float = 2.0 ** -4
    w_max: float = 2.0 ** 8
    tune_max_iters: int = 80
    tune_tolerance: float = 1e-5
    df_min: int = 1
    pool_folds: bool = False
    oversample_to: float | None = None
    jobs: int = 1


@dataclass(frozen=True)
class FoldResult:
    metrics: Metrics
    class_weight: float
    fallback: str | None
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {"class_weight": self.class_weight, "fallback": self.fallback,
                "n_train": self.n_train, "n_test": self.n_test,
                **self.metrics.to_dict()}


def run_fold(prepared: PreparedCorpus, train_rows: np.ndarray,
             test_rows: np.ndarray, flags: frozenset[str],
             ecfg: EvalConfig, seed_tag: str) -> FoldResult:
    """Fit on training rows (vocabulary, scaler, W) and score the test rows.

    Training structures are instrumented: if any test thread id shows up in
    the fitted vocabulary's source threads, the fold aborts. Degenerate folds
    fall back to a constant predictor of the single observed training class
    at W = 1.
    """
    X_train, X_test, info = prepared.matrix.fold_matrices(
        train_rows, test_rows, flags, ecfg.df_min)
    test_ids = {prepared.thread_ids[i] for i in test_rows}
    leaked = test_ids & info["source_thread_ids"]
    if leaked:
        raise RuntimeError(
            f"evaluation leakage: test thread ids inside training structures: "
            f"{sorted(leaked)[:5]}")
    y_train = prepared.labels[train_rows]
    y_test = prepared.labels[test_rows]

    if y_train.min() == y_train.max():
        constant = bool(y_train[0])
        predicted = [constant] * len(test_rows)
        metrics = compute_metrics(predicted, y_test.tolist())
        return FoldResult(metrics, 1.0, "single_class_training", len(train_rows),
                          len(test_rows))

    fallback = None
    class_weight = 1.0
    fit_idx, val_idx = stratified_split(y_train.tolist(), 0.25,
                                        f"{seed_tag}:tune_split")
    y_fit, y_val = y_train[fit_idx], y_train[val_idx]
    if not y_val.any() or y_fit.min() == y_fit.max():
        fallback = "no_tuning_split"
    else:
        tune_cfg = replace(ecfg.train, max_iters=ecfg.tune_max_iters,
                           tolerance=ecfg.tune_tolerance)
        class_weight, _ = tune_class_weight(
            X_train[fit_idx], y_fit, X_train[val_idx], y_val,
            tune_cfg, ecfg.w_min, ecfg.w_max)
    params = train(X_train, y_train, replace(ecfg.train, class_weight=class_weight))
    predicted = predict_labels(params, X_test)
    metrics = compute_metrics(predicted.tolist(), y_test.tolist())
    return FoldResult(metrics, class_weight, fallback, len(train_rows),
                      len(test_rows))


def _map_jobs(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=jobs, backend="threading")(
        delayed(fn)(item) for item in items)


# ---------------------------------------------------------------------------
# Per-course ten-fold CV

@dataclass(frozen=True)
class CourseResult:
    course_id: str
    n_threads: int
    intervention_ratio: float
    class_weight: float
    fallback: str | None
    metrics: Metrics
    baseline: Metrics | None = None
    folds: tuple[FoldResult, ...] | None = None
    skipped: str | None = None

    def to_dict(self) -> dict:
        d = {
            "course_id": self.course_id,
            "n_threads": self.n_threads,
            "intervention_ratio": self.intervention_ratio,
            "class_weight": self.class_weight,
            "fallback": self.fallback,
            "skipped": self.skipped,
            **self.metrics.to_dict(),
        }
        if self.baseline is not None:
            d["baseline"] = self.baseline.to_dict()
        if self.folds is not None:
            d["folds"] = [f.to_dict() for f in self.folds]
        return d


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    courses: tuple[CourseResult, ...]
    average: dict[str, float]
    macro: dict[str, float]
    n_threads: int
    n_excluded: int

    def course(self, course_id: str) -> CourseResult:
        for c in self.courses:
            if c.course_id == course_id:
                return c
        raise KeyError(course_id)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "courses": [c.to_dict() for c in self.courses],
            "average": self.average,
            "weighted_macro": self.macro,
            "n_threads": self.n_threads,
            "n_excluded": self.n_excluded,
        }


def _aggregate(kind: str, results: list[CourseResult],
               n_excluded: int) -> ExperimentReport:
    scored = [c for c in results if c.skipped is None]
    if not scored:
        raise ValueError("no course produced metrics")
    weights = [c.n_threads for c in scored]
    average = mean_metrics([c.metrics for c in scored])
    macro = {
        name: weighted_macro([getattr(c.metrics, name) for c in scored], weights)
        for name in ("precision", "recall", "f1")
    }
    return ExperimentReport(
        kind=kind,
        courses=tuple(sorted(results, key=lambda c: c.course_id)),
        average=average,
        macro=macro,
        n_threads=sum(weights),
        n_excluded=n_excluded,
    )


def cross_validate_course(prepared: PreparedCorpus, course_id: str,
                          k: int = 10, flags: frozenset[str] = ALL_FEATURES,
                          ecfg: EvalConfig | None = None) -> CourseResult:
    """Stratified k-fold CV within one course; metrics averaged over folds."""
    if ecfg is None:
        ecfg = EvalConfig()
    rows = prepared.rows_by_course().get(course_id)
    if rows is None:
        raise KeyError(course_id)
    labels = prepared.labels[rows]
    splits = stratified_kfold(labels.tolist(), k, f"{ecfg.seed}:kfold:{course_id}")

    def one(args: tuple[int, tuple[np.ndarray, np.ndarray]]) -> FoldResult:
        fold_no, (train_pos, test_pos) = args
        return run_fold(prepared, rows[train_pos], rows[test_pos], flags, ecfg,
                        f"{ecfg.seed}:cv:{course_id}:fold{fold_no}")

    folds = _map_jobs(one, list(enumerate(splits)), ecfg.jobs)
    if ecfg.pool_folds:
        pooled = pooled_metrics([f.metrics for f in folds])
        summary = pooled
    else:
        avg = mean_metrics([f.metrics for f in folds])
        # Confusion counts are still reported pooled; the headline P/R/F1 is
        # the per-fold average.
        pooled = pooled_metrics([f.metrics for f in folds])
        summary = Metrics(pooled.tp, pooled.fp, pooled.fn, pooled.tn,
                          avg["precision"], avg["recall"], avg["f1"])
    return CourseResult(
        course_id=course_id,
        n_threads=len(rows),
        intervention_ratio=float(labels.mean()),
        class_weight=sum(f.class_weight for f in folds) / len(folds),
        fallback=None,
        metrics=summary,
        folds=tuple(folds),
    )


def cv_all_courses(prepared: PreparedCorpus, k: int = 10,
                   flags: frozenset[str] = ALL_FEATURES,
                   ecfg: EvalConfig | None = None) -> ExperimentReport:
    """Ten-fold CV per course; courses with fewer than k threads are skipped."""
    if ecfg is None:
        ecfg = EvalConfig()
    results = []
    for course_id, rows in sorted(prepared.rows_by_course().items()):
        if len(rows) < k:
            labels = prepared.labels[rows]
            results.append(CourseResult(
                course_id=course_id, n_threads=len(rows),
                intervention_ratio=float(labels.mean()), class_weight=1.0,
                fallback=None, metrics=Metrics(0, 0, 0, 0, 0.0, 0.0, 0.0),
                skipped=f"fewer than {k} threads"))
            continue
        results.append(cross_validate_course(prepared, course_id, k, flags, ecfg))
    return _aggregate("cv", results, prepared.n_excluded)


# ---------------------------------------------------------------------------
# Leave-one-course-out CV

def _oversampled_rows(prepared: PreparedCorpus, course_rows: np.ndarray,
                      target: float, seed_tag: str) -> np.ndarray:
    labels = prepared.labels[course_rows]
    positives = course_rows[labels]
    k = min_duplicates_for_density(int(labels.sum()), len(course_rows), target)
    if k == 0:
        return course_rows
    rng = random.Random(seed_tag)
    extra = [positives[rng.randrange(len(positives))] for _ in range(k)]
    return np.concatenate([course_rows, np.array(extra, dtype=np.intp)])


def loo_course_cv(prepared: PreparedCorpus,
                  flags: frozenset[str] = ALL_FEATURES,
                  ecfg: EvalConfig | None = None) -> ExperimentReport:
    """Hold out each course in turn; train on all the others.

    With ``ecfg.oversample_to`` set, every *training* course below that
    intervention density gets its positive rows duplicated (seeded) up to the
    target before fitting, mirroring the density-equalization treatment.
    """
    if ecfg is None:
        ecfg = EvalConfig()
    by_course = prepared.rows_by_course()
    if len(by_course) < 2:
        raise ValueError("leave-one-course-out needs at least 2 courses")
    course_ids = sorted(by_course)

    def one(held_out: str) -> CourseResult:
        test_rows = by_course[held_out]
        train_parts = []
        for cid in course_ids:
            if cid == held_out:
                continue
            rows = by_course[cid]
            if ecfg.oversample_to is not None and prepared.labels[rows].any():
                rows = _oversampled_rows(prepared, rows, ecfg.oversample_to,
                                         f"{ecfg.seed}:oversample:{cid}")
            train_parts.append(rows)
        train_rows = np.concatenate(train_parts)
        fold = run_fold(prepared, train_rows, test_rows, flags, ecfg,
                        f"{ecfg.seed}:loo:{held_out}")
        y_test = prepared.labels[test_rows]
        return CourseResult(
            course_id=held_out,
            n_threads=len(test_rows),
            intervention_ratio=float(y_test.mean()),
            class_weight=fold.class_weight,
            fallback=fold.fallback,
            metrics=fold.metrics,
            baseline=all_positive_baseline(y_test.tolist()),
        )

    results = _map_jobs(one, course_ids, ecfg.jobs)
    return _aggregate("loocv", results, prepared.n_excluded)


# ---------------------------------------------------------------------------
# Feature study

def feature_study_rows() -> list[tuple[str, frozenset[str]]]:
    """The 13 studied configurations: 7 additive, then 6 ablative."""
    rows: list[tuple[str, frozenset[str]]] = []
    groups: list[str] = []
    for group in FEATURE_GROUPS:
        groups.append(group)
        name = group if len(groups) == 1 else f"+ {group}"
        rows.append((name, frozenset(groups)))
    for group in FEATURE_GROUPS[1:]:
        rows.append((f"full - {group}", ALL_FEATURES - {group}))
    return rows


def feature_study(prepared: PreparedCorpus,
                  ecfg: EvalConfig | None = None) -> list[dict]:
    """Leave-one-course-out run per feature configuration, W re-tuned each time."""
    if ecfg is None:
        ecfg = EvalConfig()
    out = []
    for row_no, (name, flags) in enumerate(feature_study_rows(), start=1):
        report = loo_course_cv(prepared, flags, ecfg)
        out.append({
            "row": row_no,
            "name": name,
            "features": sorted(flags, key=FEATURE_GROUPS.index),
            "report": report,
        })
    return out


# ---------------------------------------------------------------------------
# Correlation

def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise ValueError("input lists differ in length")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least 2 points")
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = syy = sxy = 0.0
    for x, y in zip(xs, ys):
        dx = x - mean_x
        dy = y - mean_y
        sxx += dx * dx
        syy += dy * dy
        sxy += dx * dy
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("degenerate input: zero variance")
    return sxy / math.sqrt(sxx * syy)


# ---------------------------------------------------------------------------
# Inter-annotator agreement

@dataclass(frozen=True)
class AnnotationSet:
    """Boolean judgments by several annotators over one fixed item list."""

    item_ids: tuple[str, ...]
    tags: tuple[str, ...]
    judgments: dict[str, tuple[bool, ...]]

    def __post_init__(self) -> None:
        n = len(self.item_ids)
        if len(self.tags) != n:
            raise ValueError("one tag per item required")
        for annotator, row in self.judgments.items():
            if len(row) != n:
                raise ValueError(
                    f"annotator {annotator!r} judged {len(row)} of {n} items")

    def filtered(self, tag: str) -> "AnnotationSet":
        keep = [i for i, t in enumerate(self.tags) if t == tag]
        return AnnotationSet(
            item_ids=tuple(self.item_ids[i] for i in keep),
            tags=tuple(self.tags[i] for i in keep),
            judgments={a: tuple(row[i] for i in keep)
                       for a, row in self.judgments.items()},
        )


def load_annotations(path: str | Path) -> AnnotationSet:
    """Read {"items": [{"id", "tag"?}...], "annotators": {name: [bool...]}}."""
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    items = raw["items"]
    return AnnotationSet(
        item_ids=tuple(str(item["id"]) for item in items),
        tags=tuple(str(item.get("tag", "")) for item in items),
        judgments={str(name): tuple(bool(v) for v in row)
                   for name, row in raw["annotators"].items()},
    )


def cohen_kappa(a: Sequence[bool], b: Sequence[bool]) -> float | None:
    """Cohen's kappa with marginal-product chance agreement; None if p_e = 1."""
    if len(a) != len(b):
        raise ValueError("annotations differ in length")
    n = len(a)
    if n == 0:
        raise ValueError("no items")
    p_o = sum(1 for x, y in zip(a, b) if bool(x) == bool(y)) / n
    p_a = sum(map(bool, a)) / n
    p_b = sum(map(bool, b)) / n
    p_e = p_a * p_b + (1.0 - p_a) * (1.0 - p_b)
    if p_e == 1.0:
        return None
    return (p_o - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class KappaReport:
    tag: str | None
    n_items: int
    pairs: tuple[tuple[str, str, float | None], ...]
    average: float | None

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "n_items": self.n_items,
            "pairs": {f"{a}|{b}": value for a, b, value in self.pairs},
            "average": self.average,
            "n_undefined": sum(1 for _, _, v in self.pairs if v is None),
        }


def pairwise_kappa(annotations: AnnotationSet,
                   tag: str | None = None) -> KappaReport:
    """Cohen's kappa for every annotator pair, plus the average over pairs.

    Pairs with undefined kappa (chance agreement 1) are excluded from the
    average with a warning. ``tag`` restricts the computation to the items
    carrying that tag.
    """
    if tag is not None:
        annotations = annotations.filtered(tag)
    if len(annotations.judgments) < 2:
        raise ValueError("need at least 2 annotators")
    if len(annotations.item_ids) < 2:
        raise ValueError("need at least 2 items")
    pairs = []
    defined = []
    for a, b in combinations(sorted(annotations.judgments), 2):
        value = cohen_kappa(annotations.judgments[a], annotations.judgments[b])
        if value is None:
            warnings.warn(
                f"kappa undefined for annotators {a!r} and {b!r} "
                f"(chance agreement is 1); excluded from the average")
        else:
            defined.append(value)
        pairs.append((a, b, value))
    average = sum(defined) / len(defined) if defined else None
    return KappaReport(tag=tag, n_items=len(annotations.item_ids),
                       pairs=tuple(pairs), average=average)
