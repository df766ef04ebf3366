from __future__ import annotations

import random

import pytest

from forumtriage.syngen import CorpusSpec, CourseSpec, SignalSpec, generate
from forumtriage.corpus import ForumType
from forumtriage.evaluate import prepare_corpus
from forumtriage.textprep import default_textprep_config

from helpers import make_corpus, random_course


@pytest.fixture(scope="session")
def textprep_config():
    return default_textprep_config()


@pytest.fixture(scope="session")
def tiny_corpus():
    """Two small hand-seeded courses with a few intervened threads each."""
    rng = random.Random(7)
    return make_corpus(
        random_course(rng, "courseA", 24, 9),
        random_course(rng, "courseB", 16, 5),
    )


def small_spec(seed: int = 11) -> CorpusSpec:
    """Four-course synthetic spec small enough for fast end-to-end runs."""
    mix = {ForumType.ERRATA: 0.1, ForumType.LECTURE: 0.3,
           ForumType.HOMEWORK: 0.45, ForumType.EXAM: 0.15}
    courses = tuple(
        CourseSpec(course_id=cid, thread_count=count, forum_mix=dict(mix),
                   intervention_rates={ft: rate for ft in mix})
        for cid, count, rate in [("alpha", 120, 0.35), ("bravo", 90, 0.55),
                                 ("charlie", 70, 0.15), ("delta", 60, 0.45)])
    return CorpusSpec(courses=courses, signal=SignalSpec(), seed=seed)


@pytest.fixture(scope="session")
def small_synth():
    return generate(small_spec())


@pytest.fixture(scope="session")
def small_prepared(small_synth):
    return prepare_corpus(small_synth)
