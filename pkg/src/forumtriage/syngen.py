"""Seeded synthetic-corpus generator with planted, recoverable signals.

Generated corpora mimic the structure of real MOOC forum data at desk scale:
each course has a forum-type mix and per-type intervention rates, intervened
threads contain label-correlated signal terms and elevated URL/time-reference/
affirmation rates plus longer student discussions, and a staff item arrives
strictly after all student content so truncation is exercised on every
positive thread. Everything derives from one integer seed; identical specs
produce byte-identical corpora.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .corpus import (FORUM_TYPE_ORDER, AuthorRole, Comment, Corpus, Course,
                     ForumType, Post, Thread)

RATE_CAP = 0.97


@dataclass(frozen=True)
class SignalSpec:
    """Class-conditional injection rates for the planted signals.

    The per-word rate gaps are intentionally small: classes must overlap
    enough that single-feature-group models stay mid-range, leaving visible
    headroom for the metadata groups and for the constant-positive baseline
    to win on very high-ratio courses.
    """

    n_signal_terms: int = 20
    n_background_terms: int = 600
    signal_positive: float = 0.075
    signal_negative: float = 0.055
    url_positive: float = 0.13
    url_negative: float = 0.09
    timeref_positive: float = 0.095
    timeref_negative: float = 0.06
    affirmation_positive: float = 0.19
    affirmation_negative: float = 0.07
    course_ref_rate: float = 0.10  # label-neutral on purpose

    def rates(self) -> dict[str, float]:
        return {k: v for k, v in self.__dict__.items()
                if isinstance(v, float)}


@dataclass(frozen=True)
class StructureSpec:
    """Distributions controlling thread shape and timing."""

    post_counts: tuple[tuple[int, float], ...] = (
        (1, 0.35), (2, 0.30), (3, 0.20), (4, 0.10), (5, 0.05))
    positive_extra_posts: tuple[tuple[int, float], ...] = (
        (0, 0.18), (1, 0.35), (2, 0.29), (3, 0.18))
    comment_counts: tuple[tuple[int, float], ...] = (
        (0, 0.50), (1, 0.30), (2, 0.15), (3, 0.05))
    words_min: int = 6
    words_max: int = 18
    staff_comment_prob: float = 0.25
    max_gap: int = 3600


@dataclass(frozen=True)
class CourseSpec:
    course_id: str
    thread_count: int
    forum_mix: dict[ForumType, float]
    intervention_rates: dict[ForumType, float]


@dataclass(frozen=True)
class CorpusSpec:
    courses: tuple[CourseSpec, ...]
    signal: SignalSpec = field(default_factory=SignalSpec)
    structure: StructureSpec = field(default_factory=StructureSpec)
    seed: int = 0


def _validate(spec: CorpusSpec) -> None:
    for cspec in spec.courses:
        if cspec.thread_count < 1:
            raise ValueError(
                f"course {cspec.course_id!r}: thread count must be >= 1")
        mix_sum = sum(cspec.forum_mix.values())
        if not math.isclose(mix_sum, 1.0, abs_tol=1e-6):
            raise ValueError(
                f"course {cspec.course_id!r}: forum mix sums to {mix_sum}, not 1")
        for ft, p in cspec.forum_mix.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"course {cspec.course_id!r}: mix[{ft.value}]={p}")
        for ft, r in cspec.intervention_rates.items():
            if not 0.0 <= r <= 1.0:
                raise ValueError(
                    f"course {cspec.course_id!r}: rate[{ft.value}]={r} outside [0,1]")
    for name, value in spec.signal.rates().items():
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"signal.{name}={value} outside [0,1]")
    if spec.signal.n_signal_terms < 1 or spec.signal.n_background_terms < 1:
        raise ValueError("term pool sizes must be >= 1")


# ---------------------------------------------------------------------------
# Generation

_AFFIRMATION_PHRASES = (
    "i agree",
    "agreed, this fixed it for me",
    "+1",
    "me too",
    "same here",
    "exactly",
    "thanks, that helps",
)

_COURSE_REF_NOUNS = ("slide", "lecture", "quiz", "assignment", "problem", "chapter")


def _weighted_choice(rng: random.Random,
                     pairs: Sequence[tuple[int, float]]) -> int:
    values = [v for v, _ in pairs]
    weights = [w for _, w in pairs]
    return rng.choices(values, weights)[0]


def _words(rng: random.Random, sig: SignalSpec, positive: bool, n: int) -> list[str]:
    rate = sig.signal_positive if positive else sig.signal_negative
    out = []
    for _ in range(n):
        if rng.random() < rate:
            out.append(f"signal{rng.randrange(sig.n_signal_terms):02d}")
        else:
            out.append(f"term{rng.randrange(sig.n_background_terms):03d}")
    return out


def _make_title(rng: random.Random, sig: SignalSpec, positive: bool) -> str:
    words = _words(rng, sig, positive, rng.randint(3, 6))
    return " ".join(words).capitalize()


def _make_text(rng: random.Random, sig: SignalSpec, struct: StructureSpec,
               positive: bool, reply: bool) -> str:
    if reply:
        affirmation_rate = (sig.affirmation_positive if positive
                            else sig.affirmation_negative)
        if rng.random() < affirmation_rate:
            return rng.choice(_AFFIRMATION_PHRASES)
    words = _words(rng, sig, positive, rng.randint(struct.words_min,
                                                   struct.words_max))
    text = " ".join(words).capitalize() + "."
    if rng.random() < (sig.url_positive if positive else sig.url_negative):
        text += f" see https://forum.example/p{rng.randrange(10000)}"
    if rng.random() < (sig.timeref_positive if positive else sig.timeref_negative):
        text += f" check {rng.randint(1, 59)}:{rng.randint(0, 59):02d}"
    if rng.random() < sig.course_ref_rate:
        text += f" see {rng.choice(_COURSE_REF_NOUNS)} {rng.randint(1, 30)}"
    return text


def _generate_thread(thread_id: str, course_id: str, forum_type: ForumType,
                     positive: bool, start_ts: int, rng: random.Random,
                     spec: CorpusSpec) -> Thread:
    sig, struct = spec.signal, spec.structure
    title = _make_title(rng, sig, positive)
    n_posts = _weighted_choice(rng, struct.post_counts)
    if positive:
        n_posts += _weighted_choice(rng, struct.positive_extra_posts)
    ts = start_ts
    posts = []
    for p in range(n_posts):
        ts += rng.randint(60, struct.max_gap)
        post_ts = ts
        text = _make_text(rng, sig, struct, positive, reply=p > 0)
        comments = []
        for c in range(_weighted_choice(rng, struct.comment_counts)):
            ts += rng.randint(60, struct.max_gap)
            comments.append(Comment(
                id=f"{thread_id}-p{p + 1}-c{c + 1}",
                author_role=AuthorRole.STUDENT,
                timestamp=ts,
                text=_make_text(rng, sig, struct, positive, reply=True),
            ))
        posts.append(Post(
            id=f"{thread_id}-p{p + 1}",
            author_role=AuthorRole.STUDENT,
            timestamp=post_ts,
            text=text,
            comments=tuple(comments),
        ))
    if positive:
        ts += rng.randint(60, struct.max_gap)
        staff_text = " ".join(
            f"term{rng.randrange(sig.n_background_terms):03d}"
            for _ in range(rng.randint(struct.words_min, struct.words_max))
        ).capitalize() + "."
        if rng.random() < struct.staff_comment_prob:
            last = posts[-1]
            staff = Comment(
                id=f"{thread_id}-p{len(posts)}-c{len(last.comments) + 1}",
                author_role=AuthorRole.STAFF,
                timestamp=ts,
                text=staff_text,
            )
            posts[-1] = Post(last.id, last.author_role, last.timestamp,
                             last.text, last.comments + (staff,))
        else:
            posts.append(Post(
                id=f"{thread_id}-p{len(posts) + 1}",
                author_role=AuthorRole.STAFF,
                timestamp=ts,
                text=staff_text,
            ))
    return Thread(id=thread_id, course_id=course_id, forum_type=forum_type,
                  title=title, posts=tuple(posts))


def _apportion(total: int, shares: dict[ForumType, float]) -> dict[ForumType, int]:
    """Integer counts per forum type by largest-remainder apportionment."""
    quotas = {ft: total * shares.get(ft, 0.0) for ft in FORUM_TYPE_ORDER}
    counts = {ft: math.floor(q) for ft, q in quotas.items()}
    remainder = total - sum(counts.values())
    by_fraction = sorted(
        FORUM_TYPE_ORDER,
        key=lambda ft: (-(quotas[ft] - counts[ft]), FORUM_TYPE_ORDER.index(ft)))
    for ft in by_fraction[:remainder]:
        counts[ft] += 1
    return counts


def _generate_course(cspec: CourseSpec, spec: CorpusSpec) -> Course:
    rng = random.Random(f"{spec.seed}:course:{cspec.course_id}")
    counts = _apportion(cspec.thread_count, cspec.forum_mix)
    plan: list[tuple[ForumType, bool]] = []
    for ft in FORUM_TYPE_ORDER:
        n = counts[ft]
        rate = cspec.intervention_rates.get(ft, 0.0)
        n_pos = math.floor(n * rate + 0.5)
        plan.extend([(ft, True)] * n_pos)
        plan.extend([(ft, False)] * (n - n_pos))
    rng.shuffle(plan)
    clock = rng.randrange(1_500_000_000, 1_510_000_000)
    threads = []
    for i, (ft, positive) in enumerate(plan, start=1):
        clock += rng.randint(600, 7200)
        thread_id = f"{cspec.course_id}-t{i:05d}"
        thread = _generate_thread(thread_id, cspec.course_id, ft, positive,
                                  clock, rng, spec)
        clock = max(item.timestamp for item in thread.items())
        threads.append(thread)
    return Course(cspec.course_id, tuple(threads))


def generate(spec: CorpusSpec) -> Corpus:
    """Generate the corpus described by ``spec``, deterministically."""
    _validate(spec)
    return Corpus(tuple(_generate_course(c, spec) for c in spec.courses))


# ---------------------------------------------------------------------------
# Default 14-course specification

# (thread count, course intervention ratio) for the 14 default courses.
_DEFAULT_COURSES = (
    (2058, 0.45), (1123, 0.32), (965, 0.60), (632, 0.17), (624, 0.02),
    (512, 0.49), (323, 0.76), (266, 0.76), (235, 0.55), (232, 0.01),
    (132, 0.46), (126, 0.20), (125, 0.19), (55, 0.00),
)

# Corpus-wide forum-type mix (homework-heavy, few errata threads).
_DEFAULT_MIX = {
    ForumType.ERRATA: 326 / 7408,
    ForumType.LECTURE: 2392 / 7408,
    ForumType.HOMEWORK: 3868 / 7408,
    ForumType.EXAM: 822 / 7408,
}

# Relative per-type intervention propensities (normalized against the mix so
# each course's overall ratio is preserved): errata and exam threads attract
# staff attention well above homework threads.
_DEFAULT_TYPE_TILT = {
    ForumType.ERRATA: 2.20,
    ForumType.LECTURE: 1.35,
    ForumType.HOMEWORK: 0.55,
    ForumType.EXAM: 1.70,
}


def type_rates(ratio: float, mix: dict[ForumType, float],
               tilt: dict[ForumType, float],
               cap: float = RATE_CAP) -> dict[ForumType, float]:
    """Per-type rates with mean ``ratio`` under ``mix``, shaped by ``tilt``.

    The tilt is normalized so Σ mix·rate = ratio; rates pushed past ``cap``
    are clamped and the excess mass redistributed over the remaining types
    (so high-ratio courses keep their overall ratio).
    """
    if ratio <= 0.0:
        return {ft: 0.0 for ft in mix}
    scale = sum(mix[ft] * tilt[ft] for ft in mix)
    rates = {ft: ratio * tilt[ft] / scale for ft in mix}
    while True:
        over = [ft for ft in rates if rates[ft] > cap]
        if not over:
            break
        excess = sum(mix[ft] * (rates[ft] - cap) for ft in over)
        for ft in over:
            rates[ft] = cap
        under = [ft for ft in rates if rates[ft] < cap]
        weight = sum(mix[ft] for ft in under)
        if weight <= 0.0 or excess <= 1e-15:
            break
        for ft in under:
            rates[ft] += excess / weight
    return rates


def default_d14_like_spec(seed: int = 42) -> CorpusSpec:
    """Fourteen synthetic courses with realistic sizes and intervention ratios.

    Course sizes range 55–2058 threads (7,408 total) and ratios 0.00–0.76,
    including one never-intervened course and one almost-never-intervened
    course, so downstream folds exercise the degenerate paths.
    """
    courses = []
    for i, (count, ratio) in enumerate(_DEFAULT_COURSES, start=1):
        courses.append(CourseSpec(
            course_id=f"course{i:02d}",
            thread_count=count,
            forum_mix=dict(_DEFAULT_MIX),
            intervention_rates=type_rates(ratio, _DEFAULT_MIX,
                                          _DEFAULT_TYPE_TILT),
        ))
    return CorpusSpec(courses=tuple(courses), seed=seed)


# ---------------------------------------------------------------------------
# Spec (de)serialization

def spec_to_dict(spec: CorpusSpec) -> dict:
    return {
        "seed": spec.seed,
        "courses": [
            {
                "course_id": c.course_id,
                "thread_count": c.thread_count,
                "forum_mix": {ft.value: p for ft, p in c.forum_mix.items()},
                "intervention_rates": {ft.value: r
                                       for ft, r in c.intervention_rates.items()},
            }
            for c in spec.courses
        ],
        "signal": dict(spec.signal.__dict__),
        "structure": {
            "post_counts": [list(p) for p in spec.structure.post_counts],
            "positive_extra_posts": [list(p) for p
                                     in spec.structure.positive_extra_posts],
            "comment_counts": [list(p) for p in spec.structure.comment_counts],
            "words_min": spec.structure.words_min,
            "words_max": spec.structure.words_max,
            "staff_comment_prob": spec.structure.staff_comment_prob,
            "max_gap": spec.structure.max_gap,
        },
    }


def spec_from_dict(d: dict) -> CorpusSpec:
    courses = tuple(
        CourseSpec(
            course_id=c["course_id"],
            thread_count=c["thread_count"],
            forum_mix={ForumType(k): v for k, v in c["forum_mix"].items()},
            intervention_rates={ForumType(k): v
                                for k, v in c["intervention_rates"].items()},
        )
        for c in d["courses"]
    )
    signal = SignalSpec(**d.get("signal", {}))
    raw_structure = dict(d.get("structure", {}))
    for key in ("post_counts", "positive_extra_posts", "comment_counts"):
        if key in raw_structure:
            raw_structure[key] = tuple(
                (int(v), float(w)) for v, w in raw_structure[key])
    structure = StructureSpec(**raw_structure)
    return CorpusSpec(courses=courses, signal=signal, structure=structure,
                      seed=d.get("seed", 0))


def load_spec(path: str | Path) -> CorpusSpec:
    with Path(path).open(encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))
