"""Text canonicalization, tokenization, sentence splitting, and pattern counters.

All behaviour is driven by a JSON configuration (stopwords, lexicons, and the
URL/time/math regexes) so the exact rules are auditable and replaceable. A
default configuration ships with the package.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

from .corpus import AuthorRole, Thread

URL_PLACEHOLDER = "<URLREF>"
TIME_PLACEHOLDER = "<TIMEREF>"
MATH_PLACEHOLDER = "<MATH>"

_TOKEN_RE = re.compile(r"<URLREF>|<TIMEREF>|<MATH>|[A-Za-z0-9]+")
_SENTENCE_END_RE = re.compile(r"[.!?]+(?=\s|$)")


@dataclass(frozen=True)
class TextPrepConfig:
    stopwords: frozenset[str]
    affirmations: tuple[str, ...]
    course_ref_patterns: tuple[str, ...]
    url_pattern: str
    time_pattern: str
    math_pattern: str
    abbreviations: frozenset[str]

    @cached_property
    def url_re(self) -> re.Pattern:
        return re.compile(self.url_pattern, re.IGNORECASE)

    @cached_property
    def time_re(self) -> re.Pattern:
        return re.compile(self.time_pattern, re.IGNORECASE)

    @cached_property
    def math_re(self) -> re.Pattern:
        return re.compile(self.math_pattern, re.IGNORECASE)

    @cached_property
    def course_ref_re(self) -> re.Pattern:
        joined = "|".join(f"(?:{p})" for p in self.course_ref_patterns)
        return re.compile(joined, re.IGNORECASE)

    @cached_property
    def affirmation_re(self) -> re.Pattern:
        joined = "|".join(f"(?:{p})" for p in self.affirmations)
        return re.compile(joined, re.IGNORECASE)


def load_textprep_config(path: str | Path) -> TextPrepConfig:
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    for key in ("stopwords", "affirmations", "course_ref_patterns",
                "url_pattern", "time_pattern", "math_pattern"):
        if key not in raw:
            raise ValueError(f"textprep config missing key {key!r}")
    return TextPrepConfig(
        stopwords=frozenset(raw["stopwords"]),
        affirmations=tuple(raw["affirmations"]),
        course_ref_patterns=tuple(raw["course_ref_patterns"]),
        url_pattern=raw["url_pattern"],
        time_pattern=raw["time_pattern"],
        math_pattern=raw["math_pattern"],
        abbreviations=frozenset(raw.get("abbreviations", ())),
    )


_DEFAULT_CONFIG: TextPrepConfig | None = None


def default_textprep_config() -> TextPrepConfig:
    """The configuration shipped with the package (cached)."""
    global _DEFAULT_CONFIG
    if _DEFAULT_CONFIG is None:
        ref = resources.files("forumtriage").joinpath("data/textprep_default.json")
        with resources.as_file(ref) as path:
            _DEFAULT_CONFIG = load_textprep_config(path)
    return _DEFAULT_CONFIG


@dataclass(frozen=True)
class CanonicalText:
    text: str
    url_count: int
    timeref_count: int
    math_count: int


def canonicalize(text: str, config: TextPrepConfig | None = None) -> CanonicalText:
    """Replace URLs, video-time references, and math expressions by placeholders.

    Substitution order is URLs, then time references, then math: URLs often
    contain colons that would otherwise read as time stamps. Placeholders never
    re-match any pattern, so the operation is idempotent.
    """
    if config is None:
        config = default_textprep_config()
    text, n_url = config.url_re.subn(URL_PLACEHOLDER, text)
    text, n_time = config.time_re.subn(TIME_PLACEHOLDER, text)
    text, n_math = config.math_re.subn(MATH_PLACEHOLDER, text)
    return CanonicalText(text, n_url, n_time, n_math)


def tokenize(canonical: CanonicalText | str, stopwords: frozenset[str]) -> list[str]:
    """Lowercased tokens split on non-alphanumeric boundaries.

    Placeholder tokens pass through unchanged (and uppercase); everything else
    is case-folded, and stopwords and empty tokens are dropped.
    """
    text = canonical.text if isinstance(canonical, CanonicalText) else canonical
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        tok = match.group()
        if not tok.startswith("<"):
            tok = tok.lower()
            if tok in stopwords:
                continue
        tokens.append(tok)
    return tokens


def split_sentences(text: str, abbreviations: frozenset[str] = frozenset()) -> list[str]:
    """Split on terminal punctuation followed by whitespace or end of text.

    A candidate boundary is suppressed when the word it terminates is a known
    abbreviation ("dr.", "e.g.", ...). Text without terminal punctuation is a
    single sentence; empty/whitespace-only text yields no sentences.
    """
    sentences = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        end = match.end()
        last_word = text[start:end].rsplit(None, 1)[-1] if text[start:end].strip() else ""
        if last_word.lower() in abbreviations:
            continue
        piece = text[start:end].strip()
        if piece:
            sentences.append(piece)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def count_course_refs(text: str, config: TextPrepConfig | None = None) -> int:
    """Number of explicit references to course materials or outside sources.

    The configured patterns are merged into one alternation, so overlapping
    pattern definitions cannot double-count the same span.
    """
    if config is None:
        config = default_textprep_config()
    if not config.course_ref_patterns:
        return 0
    return len(config.course_ref_re.findall(text))


def count_affirmations(thread: Thread, config: TextPrepConfig | None = None) -> int:
    """Number of student posts/comments (after the opening post) that agree.

    The opening post is the thread's earliest post: it is what the others agree
    *with*, so it never counts itself. Each matching item counts once no matter
    how many affirmation phrases it contains.
    """
    if config is None:
        config = default_textprep_config()
    if not config.affirmations:
        return 0
    count = 0
    for i, post in enumerate(thread.posts):
        items = list(post.comments) if i == 0 else [post, *post.comments]
        for item in items:
            if item.author_role is AuthorRole.STUDENT \
                    and config.affirmation_re.search(item.text):
                count += 1
    return count
