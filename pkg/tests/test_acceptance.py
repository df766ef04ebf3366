"""Acceptance suite: nine end-to-end checks, one verdict line each.

Every test prints ``[criterion N] PASS/FAIL: <measured numbers>`` past
pytest's capture and enforces a pinned wall-clock budget, so a plain
``pytest tests/test_acceptance.py`` doubles as a readable report. The heavy
shared experiment (the 14-course synthetic corpus and its three
leave-one-course-out rows) is built once per session; its cost is charged
against criterion 5's five-minute budget.
"""
from __future__ import annotations

import json
import math
import random
import time

import numpy as np
import pytest

from forumtriage.cli import main
from forumtriage.corpus import AuthorRole, ForumType, truncate_at_first_intervention
from forumtriage.evaluate import (
    EvalConfig,
    all_positive_baseline,
    cohen_kappa,
    compute_metrics,
    loo_course_cv,
    pearson,
    prepare_corpus,
    run_fold,
)
from forumtriage.features import (
    ALL_FEATURES,
    build_vocabulary,
    tf_itf_vector,
    thread_tokens,
)
from forumtriage.model import (
    ModelParams,
    TrainConfig,
    predict_labels,
    smooth_gradient,
    train,
)
from forumtriage.syngen import (
    CorpusSpec,
    CourseSpec,
    default_d14_like_spec,
    generate,
    spec_to_dict,
)
from forumtriage.textprep import default_textprep_config

from helpers import make_post, make_thread

UNIFORM_MIX = {ft: 0.25 for ft in ForumType}


@pytest.fixture
def verdict(capsys):
    def _print_and_assert(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, f"criterion {n}: {detail}"
    return _print_and_assert


@pytest.fixture(scope="session")
def d14_study():
    """Seed-42 default corpus plus the three headline LOO feature rows."""
    t0 = time.perf_counter()
    corpus = generate(default_d14_like_spec(seed=42))
    prepared = prepare_corpus(corpus)
    ecfg = EvalConfig()
    rows = {
        "unigrams": loo_course_cv(prepared, frozenset({"unigrams"}), ecfg),
        "unigrams+forum_type": loo_course_cv(
            prepared, frozenset({"unigrams", "forum_type"}), ecfg),
        "full": loo_course_cv(prepared, ALL_FEATURES, ecfg),
    }
    elapsed = time.perf_counter() - t0
    return {"rows": rows, "elapsed": elapsed}


def _flat_spec(courses: tuple[tuple[str, int, float], ...],
               seed: int) -> CorpusSpec:
    """Spec with a uniform forum mix and one intervention rate per course."""
    return CorpusSpec(
        courses=tuple(
            CourseSpec(course_id=cid, thread_count=n,
                       forum_mix=dict(UNIFORM_MIX),
                       intervention_rates={ft: rate for ft in ForumType})
            for cid, n, rate in courses),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# 1. Metric algebra


def _labels_from_counts(tp: int, fp: int, fn: int, tn: int):
    predicted = [True] * tp + [True] * fp + [False] * fn + [False] * tn
    gold = [True] * tp + [False] * fp + [True] * fn + [False] * tn
    return predicted, gold


def test_criterion_1_metric_algebra(verdict):
    t0 = time.perf_counter()
    rng = random.Random(1)
    worst_f1 = 0.0
    baseline_exact = True
    for _ in range(1000):
        tp, fp, fn, tn = (rng.randint(0, 40) for _ in range(4))
        if tp + fp + fn + tn == 0:
            tn = 1
        predicted, gold = _labels_from_counts(tp, fp, fn, tn)
        m = compute_metrics(predicted, gold)
        assert (m.tp, m.fp, m.fn, m.tn) == (tp, fp, fn, tn)
        if m.precision + m.recall > 0:
            identity = 2 * m.precision * m.recall / (m.precision + m.recall)
            worst_f1 = max(worst_f1, abs(m.f1 - identity))
        else:
            assert m.f1 == 0.0
        n = len(gold)
        p = (tp + fn) / n
        if all_positive_baseline(gold).f1 != 2 * p / (1 + p):
            baseline_exact = False
    elapsed = time.perf_counter() - t0
    ok = worst_f1 <= 1e-12 and baseline_exact and elapsed < 1.0
    verdict(1, ok,
            f"1000 configs: max |F1 - 2PR/(P+R)| = {worst_f1:.2e} (<=1e-12), "
            f"baseline F1 == 2p/(1+p) exactly: {baseline_exact}, "
            f"{elapsed:.2f}s (<1s)")


# ---------------------------------------------------------------------------
# 2. Solver correctness


def _random_instance(seed: int, n: int = 30, d: int = 5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = (X @ w + 0.5 * rng.normal(size=n) > 0).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


def _plain_logloss(w, b, X, y, class_weight):
    total = 0.0
    for i in range(len(y)):
        z = float(np.dot(X[i], w)) + b
        p = 1.0 / (1.0 + math.exp(-z))
        p = min(max(p, 1e-12), 1.0 - 1e-12)
        c = class_weight if y[i] == 1 else 1.0
        total += -c * (y[i] * math.log(p) + (1 - y[i]) * math.log(1.0 - p))
    return total


def test_criterion_2_solver(verdict):
    t0 = time.perf_counter()
    h = 1e-6
    max_rel = 0.0
    for seed in range(20):
        X, y = _random_instance(seed)
        rng = np.random.default_rng(5000 + seed)
        w = rng.normal(scale=0.5, size=X.shape[1])
        b = float(rng.normal(scale=0.5))
        cw = float(rng.uniform(0.5, 4.0))
        cfg = TrainConfig(lam=0.1, class_weight=cw)
        grad_w, grad_b = smooth_gradient(ModelParams(w, b), X, y, cfg)
        for j in range(X.shape[1] + 1):
            if j < X.shape[1]:
                bump = np.zeros_like(w)
                bump[j] = h
                fd = (_plain_logloss(w + bump, b, X, y, cw)
                      - _plain_logloss(w - bump, b, X, y, cw)) / (2 * h)
                got = grad_w[j]
            else:
                fd = (_plain_logloss(w, b + h, X, y, cw)
                      - _plain_logloss(w, b - h, X, y, cw)) / (2 * h)
                got = grad_b
            max_rel = max(max_rel, abs(got - fd) / max(abs(fd), 1e-7))
    grad_ok = max_rel <= 1e-5

    monotone = True
    for seed in range(6):
        X, y = _random_instance(100 + seed)
        trace: list[float] = []
        train(X, y, TrainConfig(lam=0.05), trace=trace)
        monotone &= all(later <= earlier + 1e-12
                        for earlier, later in zip(trace, trace[1:]))

    X, y = _random_instance(7)
    crushed = train(X, y, TrainConfig(lam=1e6))
    all_zero = not crushed.weights.any()

    x = np.linspace(-5, 5, 20).reshape(-1, 1)
    x = x[np.abs(x[:, 0]) > 0.4]
    y_sep = (x[:, 0] > 0).astype(int)
    params = train(x, y_sep, TrainConfig(lam=1e-4))
    sep_f1 = compute_metrics(
        list(predict_labels(params, x)), list(y_sep.astype(bool))).f1

    elapsed = time.perf_counter() - t0
    ok = grad_ok and monotone and all_zero and sep_f1 == 1.0 and elapsed < 30
    verdict(2, ok,
            f"FD gradient max rel err = {max_rel:.2e} (<=1e-5), "
            f"objective monotone: {monotone}, lam=1e6 all-zero: {all_zero}, "
            f"separable train F1 = {sep_f1:.4f} (==1.0), "
            f"{elapsed:.1f}s (<30s)")


# ---------------------------------------------------------------------------
# 3. tf×itf oracle equivalence


def _oracle_tf_itf(own_tokens, all_token_lists):
    """Nested-loop recount of tf, df, itf, and the norm, in index order."""
    n = len(all_token_lists)
    terms = sorted({tok for toks in all_token_lists for tok in toks})
    raw = {}
    for i, term in enumerate(terms):
        tf = 0
        for tok in own_tokens:
            if tok == term:
                tf += 1
        df = 0
        for toks in all_token_lists:
            if term in toks:
                df += 1
        weight = tf * math.log(n / df)
        if weight != 0.0:
            raw[i] = weight
    norm_sq = 0.0
    for i in sorted(raw):
        norm_sq += raw[i] * raw[i]
    if norm_sq == 0.0:
        return {}
    norm = math.sqrt(norm_sq)
    return {i: w / norm for i, w in raw.items()}


def test_criterion_3_tf_itf_oracle(verdict):
    t0 = time.perf_counter()
    config = default_textprep_config()
    pool = [f"term{k:02d}" for k in range(50)]
    compared = 0
    exact = True
    for trial in range(100):
        rng = random.Random(trial)
        threads = []
        for t in range(rng.randint(1, 10)):
            posts = tuple(
                make_post(ts=10 * (p + 1),
                          text=" ".join(rng.choices(pool, k=rng.randint(3, 12))),
                          role=AuthorRole.STUDENT)
                for p in range(rng.randint(1, 3)))
            threads.append(make_thread(
                posts, title=" ".join(rng.choices(pool, k=2))))
        vocab = build_vocabulary(threads, config)
        token_lists = [thread_tokens(t, config) for t in threads]
        for thread, own in zip(threads, token_lists):
            got = tf_itf_vector(thread, vocab, config)
            expected = _oracle_tf_itf(own, token_lists)
            exact &= got == expected
            compared += 1
    elapsed = time.perf_counter() - t0
    ok = exact and elapsed < 10
    verdict(3, ok,
            f"100 random corpora, {compared} vectors, exact dict equality: "
            f"{exact}, {elapsed:.1f}s (<10s)")


# ---------------------------------------------------------------------------
# 4. Truncation / leakage


def test_criterion_4_truncation_and_leakage(verdict):
    t0 = time.perf_counter()
    spec = _flat_spec((("c1", 350, 0.4), ("c2", 330, 0.25), ("c3", 320, 0.55)),
                      seed=7)
    corpus = generate(spec)

    staff_after_cut = 0
    n_intervened = 0
    for course in corpus.courses:
        for thread in course.threads:
            if not any(item.author_role is AuthorRole.STAFF
                       for item in thread.items()):
                continue
            n_intervened += 1
            cut = truncate_at_first_intervention(thread)
            staff_after_cut += sum(
                1 for item in cut.items()
                if item.author_role is AuthorRole.STAFF)

    prepared = prepare_corpus(corpus)
    rows = prepared.rows_by_course()
    leaked = 0
    for held_out in sorted(rows):
        test_idx = rows[held_out]
        train_idx = np.concatenate(
            [rows[c] for c in sorted(rows) if c != held_out])
        _, _, info = prepared.matrix.fold_matrices(train_idx, test_idx,
                                                   ALL_FEATURES)
        test_ids = {prepared.thread_ids[i] for i in test_idx}
        leaked += len(test_ids & info["source_thread_ids"])

    with pytest.raises(RuntimeError, match="leakage"):
        run_fold(prepared, np.arange(len(prepared.threads)), np.arange(5),
                 ALL_FEATURES, EvalConfig(), "acceptance:leak")

    elapsed = time.perf_counter() - t0
    ok = staff_after_cut == 0 and leaked == 0 and elapsed < 10
    verdict(4, ok,
            f"{n_intervened} intervened threads: {staff_after_cut} staff items "
            f"survive truncation (==0); LOO folds: {leaked} test ids in "
            f"training structures (==0); overlap raises; {elapsed:.1f}s (<10s)")


# ---------------------------------------------------------------------------
# 5. Feature-row ordering on the default synthetic corpus


def test_criterion_5_feature_row_gaps(d14_study, verdict):
    rows = d14_study["rows"]
    base = rows["unigrams"].macro["f1"] * 100
    with_type = rows["unigrams+forum_type"].macro["f1"] * 100
    full = rows["full"].macro["f1"] * 100
    type_gap = with_type - base
    full_gap = full - base
    elapsed = d14_study["elapsed"]
    ok = type_gap >= 1.0 and full_gap >= 3.0 and elapsed < 300
    verdict(5, ok,
            f"LOO weighted-macro F1: unigrams {base:.2f}, +forum_type "
            f"{with_type:.2f} (gap {type_gap:+.2f} >= 1.0), full {full:.2f} "
            f"(gap {full_gap:+.2f} >= 3.0), {elapsed:.0f}s (<300s)")


# ---------------------------------------------------------------------------
# 6. Baseline crossover at high intervention ratios


def test_criterion_6_baseline_crossover(d14_study, verdict):
    t0 = time.perf_counter()
    courses = [c for c in d14_study["rows"]["full"].courses
               if c.skipped is None]
    high = [c for c in courses if c.intervention_ratio >= 0.7]
    wins = [c for c in high if c.baseline.f1 > c.metrics.f1]
    elapsed = time.perf_counter() - t0
    detail = ", ".join(
        f"{c.course_id} ratio {c.intervention_ratio:.2f}: baseline "
        f"{c.baseline.f1 * 100:.2f} vs learned {c.metrics.f1 * 100:.2f}"
        for c in high)
    ok = bool(high) and bool(wins) and elapsed < 120
    verdict(6, ok,
            f"{len(wins)}/{len(high)} high-ratio courses beaten by the "
            f"all-positive baseline ({detail}); {elapsed:.2f}s (<120s)")


# ---------------------------------------------------------------------------
# 7. Correlation harness

# Per-course (intervention ratio, model F1 %) pairs measured on a real
# 14-course deployment, transcribed as a reference fixture.
_DEPLOYED_RATIOS = (0.45, 0.32, 0.60, 0.17, 0.02, 0.49, 0.76,
                    0.76, 0.55, 0.01, 0.46, 0.20, 0.19, 0.00)
_DEPLOYED_F1 = (64.96, 49.62, 51.29, 25.00, 14.28, 63.56, 75.36,
                63.16, 58.33, 0.00, 64.57, 23.53, 28.57, 0.00)


def test_criterion_7_correlation(d14_study, verdict):
    courses = [c for c in d14_study["rows"]["full"].courses
               if c.skipped is None]
    t0 = time.perf_counter()
    r_synth = pearson([c.intervention_ratio for c in courses],
                      [c.metrics.f1 for c in courses])
    r_fixture = pearson(_DEPLOYED_RATIOS, _DEPLOYED_F1)
    elapsed = time.perf_counter() - t0
    ok = 0.0 < r_synth <= 1.0 and abs(r_fixture - 0.93) <= 0.02 \
        and elapsed < 1.0
    verdict(7, ok,
            f"synthetic run r = {r_synth:.4f} (in (0, 1]), fixture r = "
            f"{r_fixture:.4f} (0.93 +/- 0.02), {elapsed:.3f}s (<1s)")


# ---------------------------------------------------------------------------
# 8. Kappa


def test_criterion_8_kappa(verdict):
    t0 = time.perf_counter()
    identical = cohen_kappa([True, False, True, False, False],
                            [True, False, True, False, False])
    checkerboard = cohen_kappa([True, True, False, False],
                               [True, False, True, False])

    symmetric = relabel_invariant = True
    for trial in range(100):
        rng = random.Random(9000 + trial)
        n = rng.randint(2, 30)
        a = [rng.random() < 0.5 for _ in range(n)]
        b = [rng.random() < 0.5 for _ in range(n)]
        ab, ba = cohen_kappa(a, b), cohen_kappa(b, a)
        symmetric &= ab == ba
        flipped = cohen_kappa([not x for x in a], [not x for x in b])
        if ab is None or flipped is None:
            relabel_invariant &= ab is None and flipped is None
        else:
            relabel_invariant &= abs(ab - flipped) <= 1e-12

    elapsed = time.perf_counter() - t0
    ok = identical == 1.0 and checkerboard == 0.0 and symmetric \
        and relabel_invariant and elapsed < 1.0
    verdict(8, ok,
            f"identical -> {identical}, checkerboard -> {checkerboard} "
            f"(==0.0 exactly), symmetric: {symmetric}, relabel-invariant: "
            f"{relabel_invariant} (100 trials), {elapsed:.2f}s (<1s)")


# ---------------------------------------------------------------------------
# 9. Byte-identical reruns


def test_criterion_9_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    spec_path = tmp_path / "spec.json"
    spec = _flat_spec((("alpha", 60, 0.45), ("beta", 50, 0.3)), seed=23)
    spec_path.write_text(json.dumps(spec_to_dict(spec)), encoding="utf-8")

    corpora = []
    for tag in ("a", "b"):
        out = tmp_path / f"corpus_{tag}.jsonl"
        assert main(["synth", "--spec", str(spec_path),
                     "--out", str(out)]) == 0
        corpora.append(out.read_bytes())
    stable = {"synth": corpora[0] == corpora[1]}

    corpus_path = tmp_path / "corpus_a.jsonl"
    commands = {
        "cv": ["cv", "--corpus", str(corpus_path), "--k", "4"],
        "loocv": ["loocv", "--corpus", str(corpus_path)],
        "ablate": ["ablate", "--corpus", str(corpus_path)],
    }
    for name, args in commands.items():
        payloads = []
        for tag in ("a", "b"):
            out = tmp_path / f"{name}_{tag}.json"
            assert main(args + ["--fixed-clock", "--out", str(out)]) == 0
            payloads.append(out.read_bytes())
        stable[name] = payloads[0] == payloads[1]

    elapsed = time.perf_counter() - t0
    ok = all(stable.values()) and elapsed < 300
    summary = ", ".join(f"{k}: {'ok' if v else 'DIFFERS'}"
                        for k, v in stable.items())
    verdict(9, ok, f"byte-identical reruns - {summary}; {elapsed:.0f}s (<300s)")
