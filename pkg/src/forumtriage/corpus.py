"""Forum data model: threads, loading/saving, labeling, truncation, and statistics.

A corpus is a set of courses; each course holds discussion threads from one of
four subforum types. Posts carry a single level of comments. Staff authorship
anywhere in a thread is what makes it a positive (intervened) instance.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterator


class ForumType(str, Enum):
    ERRATA = "errata"
    LECTURE = "lecture"
    HOMEWORK = "homework"
    EXAM = "exam"


# Fixed order used for bit encoding and stats tables.
FORUM_TYPE_ORDER = (
    ForumType.ERRATA,
    ForumType.LECTURE,
    ForumType.HOMEWORK,
    ForumType.EXAM,
)


class AuthorRole(str, Enum):
    STUDENT = "student"
    STAFF = "staff"


class CorpusFormatError(ValueError):
    """A corpus file could not be parsed or failed validation."""


@dataclass(frozen=True)
class Comment:
    id: str
    author_role: AuthorRole
    timestamp: int
    text: str


@dataclass(frozen=True)
class Post:
    id: str
    author_role: AuthorRole
    timestamp: int
    text: str
    comments: tuple[Comment, ...] = ()


@dataclass(frozen=True)
class Thread:
    id: str
    course_id: str
    forum_type: ForumType
    title: str
    posts: tuple[Post, ...] = ()

    def items(self) -> Iterator[Post | Comment]:
        """All posts and comments in document order."""
        for post in self.posts:
            yield post
            yield from post.comments


@dataclass(frozen=True)
class Course:
    id: str
    threads: tuple[Thread, ...] = ()


@dataclass(frozen=True)
class Corpus:
    courses: tuple[Course, ...] = ()

    def iter_threads(self) -> Iterator[Thread]:
        for course in self.courses:
            yield from course.threads

    def course(self, course_id: str) -> Course:
        for c in self.courses:
            if c.id == course_id:
                return c
        raise KeyError(course_id)


def label_thread(thread: Thread) -> bool:
    """True iff any post or comment is staff-authored."""
    return any(item.author_role is AuthorRole.STAFF for item in thread.items())


def truncate_at_first_intervention(thread: Thread) -> Thread:
    """Remove the first staff item and everything at or after its timestamp.

    The cut point is the minimum timestamp over staff posts and staff comments.
    Retained content is strictly earlier than the cut, so a student item posted
    at the same instant as the intervention is dropped too (nothing possibly
    posterior to the intervention leaks in). Unintervened threads are returned
    unchanged. The result can have zero posts when the very first item was
    staff-authored; callers normally exclude those threads.
    """
    staff_ts = [item.timestamp for item in thread.items()
                if item.author_role is AuthorRole.STAFF]
    if not staff_ts:
        return thread
    cut = min(staff_ts)
    posts = tuple(
        replace(post, comments=tuple(c for c in post.comments if c.timestamp < cut))
        for post in thread.posts
        if post.timestamp < cut
    )
    return replace(thread, posts=posts)


def is_observable(thread: Thread) -> bool:
    """Whether a (truncated) thread still has content to extract features from."""
    return len(thread.posts) > 0


def rewind(thread: Thread, cutoff: int) -> Thread:
    """Reconstruct the thread state at time ``cutoff`` (inclusive)."""
    posts = tuple(
        replace(post, comments=tuple(c for c in post.comments if c.timestamp <= cutoff))
        for post in thread.posts
        if post.timestamp <= cutoff
    )
    return replace(thread, posts=posts)


# ---------------------------------------------------------------------------
# Statistics

@dataclass(frozen=True)
class StatsCell:
    """Counts for one slice of the corpus. ``posts`` includes comments."""

    threads: int = 0
    posts: int = 0
    intervened_threads: int = 0
    intervened_posts: int = 0

    @property
    def intervention_ratio(self) -> float:
        if self.threads == 0:
            return 0.0
        return self.intervened_threads / self.threads

    def merged(self, other: "StatsCell") -> "StatsCell":
        return StatsCell(
            self.threads + other.threads,
            self.posts + other.posts,
            self.intervened_threads + other.intervened_threads,
            self.intervened_posts + other.intervened_posts,
        )

    def to_dict(self) -> dict:
        return {
            "threads": self.threads,
            "posts": self.posts,
            "intervened_threads": self.intervened_threads,
            "intervened_posts": self.intervened_posts,
            "intervention_ratio": self.intervention_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StatsCell":
        return cls(d["threads"], d["posts"],
                   d["intervened_threads"], d["intervened_posts"])


@dataclass(frozen=True)
class CorpusStats:
    by_course_type: dict[tuple[str, ForumType], StatsCell]
    by_course: dict[str, StatsCell]
    by_type: dict[ForumType, StatsCell]
    total: StatsCell

    def to_dict(self) -> dict:
        return {
            "by_course_type": {
                f"{cid}/{ft.value}": cell.to_dict()
                for (cid, ft), cell in sorted(self.by_course_type.items())
            },
            "by_course": {cid: cell.to_dict()
                          for cid, cell in sorted(self.by_course.items())},
            "by_type": {ft.value: cell.to_dict()
                        for ft, cell in self.by_type.items()},
            "total": self.total.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusStats":
        by_course_type = {}
        for key, cell in d["by_course_type"].items():
            cid, _, ft = key.rpartition("/")
            by_course_type[(cid, ForumType(ft))] = StatsCell.from_dict(cell)
        return cls(
            by_course_type=by_course_type,
            by_course={cid: StatsCell.from_dict(c) for cid, c in d["by_course"].items()},
            by_type={ForumType(ft): StatsCell.from_dict(c) for ft, c in d["by_type"].items()},
            total=StatsCell.from_dict(d["total"]),
        )


def compute_stats(corpus: Corpus) -> CorpusStats:
    """Per-course, per-forum-type thread/post/intervention counts and ratios."""
    by_course_type: dict[tuple[str, ForumType], StatsCell] = {}
    for course in corpus.courses:
        for thread in course.threads:
            n_items = sum(1 for _ in thread.items())
            intervened = label_thread(thread)
            cell = StatsCell(
                threads=1,
                posts=n_items,
                intervened_threads=int(intervened),
                intervened_posts=n_items if intervened else 0,
            )
            key = (course.id, thread.forum_type)
            by_course_type[key] = by_course_type.get(key, StatsCell()).merged(cell)

    by_course: dict[str, StatsCell] = {}
    by_type: dict[ForumType, StatsCell] = {ft: StatsCell() for ft in FORUM_TYPE_ORDER}
    total = StatsCell()
    for course in corpus.courses:
        by_course[course.id] = StatsCell()
    for (cid, ft), cell in by_course_type.items():
        by_course[cid] = by_course[cid].merged(cell)
        by_type[ft] = by_type[ft].merged(cell)
        total = total.merged(cell)
    return CorpusStats(by_course_type, by_course, by_type, total)


# ---------------------------------------------------------------------------
# Oversampling

def min_duplicates_for_density(n_intervened: int, n_total: int,
                               target_density: float) -> int:
    """Smallest k with (n_intervened + k) / (n_total + k) >= target_density."""
    if not 0.0 <= target_density < 1.0:
        raise ValueError(f"target density must be in [0, 1), got {target_density}")
    if n_total > 0 and n_intervened / n_total >= target_density:
        return 0
    if n_intervened == 0:
        raise ValueError(
            f"density {target_density} is unreachable with zero intervened threads")
    k = math.ceil((target_density * n_total - n_intervened) / (1.0 - target_density))
    # Guard against float fuzz in the closed form: enforce minimality directly.
    while k > 0 and (n_intervened + k - 1) / (n_total + k - 1) >= target_density:
        k -= 1
    while (n_intervened + k) / (n_total + k) < target_density:
        k += 1
    return k


def oversample_to_density(course: Course, target_density: float, seed: int) -> Course:
    """Duplicate random intervened threads until intervened/total >= target.

    Duplicates are drawn uniformly with replacement from the course's
    intervened threads using a generator seeded with ``seed``; each copy gets
    a fresh id with a ``#dupN`` suffix so provenance stays traceable. Courses
    already at or above the target come back unchanged. The number of copies
    added is minimal.
    """
    if not 0.0 <= target_density < 1.0:
        raise ValueError(f"target density must be in [0, 1), got {target_density}")
    intervened = [t for t in course.threads if label_thread(t)]
    n = len(course.threads)
    p = len(intervened)
    if n == 0:
        return course
    try:
        k = min_duplicates_for_density(p, n, target_density)
    except ValueError as exc:
        raise ValueError(f"course {course.id!r}: {exc}") from None
    if k == 0:
        return course
    rng = random.Random(seed)
    copies = []
    for i in range(1, k + 1):
        source = rng.choice(intervened)
        copies.append(replace(source, id=f"{source.id}#dup{i}"))
    return replace(course, threads=course.threads + tuple(copies))


# ---------------------------------------------------------------------------
# JSON Lines persistence
#
# One thread per line: course_id, thread_id, forum_type, title, posts
# (each post: id, role, ts, text, comments with the same item fields).

def _parse_item(raw: dict, line_no: int, kind: str) -> dict:
    out = {}
    for field in ("id", "role", "ts", "text"):
        if field not in raw:
            raise CorpusFormatError(f"line {line_no}: {kind} missing field {field!r}")
        out[field] = raw[field]
    try:
        role = AuthorRole(out["role"])
    except ValueError:
        raise CorpusFormatError(
            f"line {line_no}: unknown author role {out['role']!r}") from None
    if not isinstance(out["ts"], int):
        raise CorpusFormatError(f"line {line_no}: {kind} timestamp must be an integer")
    return {"id": str(out["id"]), "role": role, "ts": out["ts"], "text": str(out["text"])}


def _parse_thread(raw: dict, line_no: int) -> Thread:
    for field in ("course_id", "thread_id", "forum_type", "title", "posts"):
        if field not in raw:
            raise CorpusFormatError(f"line {line_no}: missing field {field!r}")
    try:
        forum_type = ForumType(raw["forum_type"])
    except ValueError:
        raise CorpusFormatError(
            f"line {line_no}: unknown forum type {raw['forum_type']!r}") from None
    posts = []
    for raw_post in raw["posts"]:
        p = _parse_item(raw_post, line_no, "post")
        comments = []
        for raw_comment in raw_post.get("comments", ()):
            c = _parse_item(raw_comment, line_no, "comment")
            comments.append(Comment(c["id"], c["role"], c["ts"], c["text"]))
        comments.sort(key=lambda c: c.timestamp)
        posts.append(Post(p["id"], p["role"], p["ts"], p["text"], tuple(comments)))
    if not posts:
        raise CorpusFormatError(
            f"line {line_no}: thread {raw['thread_id']!r} has no posts")
    posts.sort(key=lambda p: p.timestamp)
    return Thread(
        id=str(raw["thread_id"]),
        course_id=str(raw["course_id"]),
        forum_type=forum_type,
        title=str(raw["title"]),
        posts=tuple(posts),
    )


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a JSON Lines corpus file."""
    path = Path(path)
    course_order: list[str] = []
    threads_by_course: dict[str, list[Thread]] = {}
    seen_ids: dict[str, set[str]] = {}
    n_lines = 0
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            n_lines += 1
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
            thread = _parse_thread(raw, line_no)
            cid = thread.course_id
            if cid not in threads_by_course:
                course_order.append(cid)
                threads_by_course[cid] = []
                seen_ids[cid] = set()
            if thread.id in seen_ids[cid]:
                raise CorpusFormatError(
                    f"line {line_no}: duplicate thread id {thread.id!r} in course {cid!r}")
            seen_ids[cid].add(thread.id)
            threads_by_course[cid].append(thread)
    if n_lines == 0:
        raise CorpusFormatError(f"{path}: empty corpus file")
    courses = tuple(Course(cid, tuple(threads_by_course[cid])) for cid in course_order)
    return Corpus(courses)


def _item_dict(item: Post | Comment) -> dict:
    return {
        "id": item.id,
        "role": item.author_role.value,
        "ts": item.timestamp,
        "text": item.text,
    }


def thread_to_record(thread: Thread) -> dict:
    posts = []
    for post in thread.posts:
        d = _item_dict(post)
        d["comments"] = [_item_dict(c) for c in post.comments]
        posts.append(d)
    return {
        "course_id": thread.course_id,
        "thread_id": thread.id,
        "forum_type": thread.forum_type.value,
        "title": thread.title,
        "posts": posts,
    }


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the corpus in the JSON Lines format accepted by load_corpus."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for thread in corpus.iter_threads():
            fh.write(json.dumps(thread_to_record(thread), ensure_ascii=False,
                                separators=(",", ":")))
            fh.write("\n")
