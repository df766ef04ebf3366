"""Hand-rolled corpus builders shared across test modules."""
from __future__ import annotations

import itertools
import random

from forumtriage.corpus import (
    AuthorRole,
    Comment,
    Corpus,
    Course,
    ForumType,
    Post,
    Thread,
)

_counter = itertools.count()


def make_comment(ts: int, text: str = "a reply", role: AuthorRole = AuthorRole.STUDENT,
                 cid: str | None = None) -> Comment:
    return Comment(id=cid or f"c{next(_counter)}", author_role=role,
                   timestamp=ts, text=text)


def make_post(ts: int, text: str = "a post", role: AuthorRole = AuthorRole.STUDENT,
              comments: tuple[Comment, ...] = (), pid: str | None = None) -> Post:
    return Post(id=pid or f"p{next(_counter)}", author_role=role,
                timestamp=ts, text=text, comments=comments)


def make_thread(posts, tid: str | None = None, course_id: str = "c1",
                forum_type: ForumType = ForumType.HOMEWORK,
                title: str = "a title") -> Thread:
    return Thread(id=tid or f"t{next(_counter)}", course_id=course_id,
                  forum_type=forum_type, title=title, posts=tuple(posts))


def make_course(threads, course_id: str = "c1") -> Course:
    fixed = tuple(
        Thread(id=t.id, course_id=course_id, forum_type=t.forum_type,
               title=t.title, posts=t.posts)
        for t in threads)
    return Course(id=course_id, threads=fixed)


def make_corpus(*courses: Course) -> Corpus:
    return Corpus(courses=tuple(courses))


def staff_thread(tid: str = "t-staff", course_id: str = "c1",
                 staff_ts: int = 50) -> Thread:
    """Two student posts then one staff post (an intervened thread)."""
    return make_thread(
        [make_post(10, "question about gradients and loss"),
         make_post(20, "more context with an example"),
         make_post(staff_ts, "official answer", role=AuthorRole.STAFF)],
        tid=tid, course_id=course_id)


def student_thread(tid: str = "t-stud", course_id: str = "c1",
                   text: str = "just students talking here") -> Thread:
    return make_thread(
        [make_post(10, text),
         make_post(20, "a follow up", comments=(make_comment(25, "a comment"),))],
        tid=tid, course_id=course_id)


def random_thread(rng: random.Random, tid: str, course_id: str = "c1",
                  vocabulary: tuple[str, ...] = ("alpha", "beta", "gamma", "delta",
                                                 "epsilon", "zeta", "eta", "theta"),
                  intervened: bool = False) -> Thread:
    """Small random student thread, optionally ending with a staff post."""
    def words(k: int) -> str:
        return " ".join(rng.choice(vocabulary) for _ in range(k))

    ts = itertools.count(rng.randrange(100, 200), 7)
    posts = []
    for _ in range(rng.randrange(1, 4)):
        comments = tuple(
            make_comment(next(ts), words(rng.randrange(2, 6)))
            for _ in range(rng.randrange(0, 3)))
        posts.append(make_post(next(ts), words(rng.randrange(3, 9)),
                               comments=comments))
    if intervened:
        posts.append(make_post(next(ts), words(4), role=AuthorRole.STAFF))
    forum_type = rng.choice(list(ForumType))
    return make_thread(posts, tid=tid, course_id=course_id,
                       forum_type=forum_type,
                       title=words(rng.randrange(2, 5)))


def random_course(rng: random.Random, course_id: str, n_threads: int,
                  n_intervened: int) -> Course:
    flags = [True] * n_intervened + [False] * (n_threads - n_intervened)
    rng.shuffle(flags)
    threads = [random_thread(rng, f"{course_id}-t{i}", course_id, intervened=f)
               for i, f in enumerate(flags)]
    return Course(id=course_id, threads=tuple(threads))
