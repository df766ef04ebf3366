"""Feature extraction: tf×itf term vectors, forum-type bits, dense metadata.

Term weights are term frequency times inverse *thread* frequency,
itf = ln(total_threads / thread_df), computed over a vocabulary fitted on
training threads only; the term sub-vector is L2-normalized per thread.
Dense metadata features are max-min normalized with training-set bounds.

Two extraction paths exist: the per-thread reference path (`assemble`) and a
vectorized batch path (`CorpusMatrix`) used by the evaluation harness; the
batch path is tested for numerical agreement with the reference path.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .corpus import FORUM_TYPE_ORDER, Thread
from .textprep import (TextPrepConfig, canonicalize, count_affirmations,
                       count_course_refs, default_textprep_config,
                       split_sentences, tokenize)

# Feature groups in the order they are studied (and concatenated).
FEATURE_GROUPS = (
    "unigrams",
    "forum_type",
    "course_ref",
    "affirmation",
    "thread_props",
    "num_sents",
    "nonlex_ref",
)

ALL_FEATURES = frozenset(FEATURE_GROUPS)

# Dense metadata layout. thread_props covers the four structural counts,
# nonlex_ref covers the canonicalization counters (URLs, time references).
META_FIELD_ORDER = (
    "course_refs",
    "affirmations",
    "n_posts",
    "n_comments",
    "n_items",
    "avg_comments_per_post",
    "n_sentences",
    "n_urls",
    "n_timerefs",
)

GROUP_META_DIMS = {
    "course_ref": (0,),
    "affirmation": (1,),
    "thread_props": (2, 3, 4, 5),
    "num_sents": (6,),
    "nonlex_ref": (7, 8),
}


def parse_feature_flags(spec: str) -> frozenset[str]:
    """Parse a comma-separated feature-group list, e.g. "unigrams,forum_type"."""
    flags = frozenset(part.strip() for part in spec.split(",") if part.strip())
    unknown = flags - ALL_FEATURES
    if unknown:
        raise ValueError(
            f"unknown feature group(s) {sorted(unknown)}; "
            f"valid groups: {', '.join(FEATURE_GROUPS)}")
    if not flags:
        raise ValueError("empty feature-group list")
    return flags


def meta_dims_for(flags: frozenset[str]) -> tuple[int, ...]:
    """Indices into META_FIELD_ORDER selected by the enabled groups."""
    dims: list[int] = []
    for group in FEATURE_GROUPS:
        if group in GROUP_META_DIMS and group in flags:
            dims.extend(GROUP_META_DIMS[group])
    return tuple(dims)


# ---------------------------------------------------------------------------
# Vocabulary and tf×itf

def thread_tokens(thread: Thread, config: TextPrepConfig | None = None) -> list[str]:
    """Token stream of a whole thread: title, then post/comment texts in order."""
    if config is None:
        config = default_textprep_config()
    tokens: list[str] = []
    texts = [thread.title] + [item.text for item in thread.items()]
    for text in texts:
        tokens.extend(tokenize(canonicalize(text, config), config.stopwords))
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Term index fitted on training threads.

    Indices are dense and assigned by sorted term order, so identical training
    text always produces the identical vocabulary. ``source_thread_ids`` records
    which threads the vocabulary saw, for leakage checks in held-out runs.
    """

    terms: tuple[str, ...]
    thread_df: tuple[int, ...]
    total_threads: int
    source_thread_ids: frozenset[str]

    @cached_property
    def index(self) -> dict[str, int]:
        return {term: i for i, term in enumerate(self.terms)}

    def __len__(self) -> int:
        return len(self.terms)

    def to_dict(self) -> dict:
        return {
            "terms": list(self.terms),
            "thread_df": list(self.thread_df),
            "total_threads": self.total_threads,
            "source_thread_ids": sorted(self.source_thread_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(
            terms=tuple(d["terms"]),
            thread_df=tuple(d["thread_df"]),
            total_threads=d["total_threads"],
            source_thread_ids=frozenset(d["source_thread_ids"]),
        )


def build_vocabulary(threads: Sequence[Thread],
                     config: TextPrepConfig | None = None,
                     df_min: int = 1) -> Vocabulary:
    """Fit the term index on training threads (already truncated).

    thread_df counts the number of distinct threads containing each term.
    Terms below ``df_min`` are dropped.
    """
    if not threads:
        raise ValueError("cannot build a vocabulary from an empty training set")
    df: Counter[str] = Counter()
    for thread in threads:
        df.update(set(thread_tokens(thread, config)))
    terms = tuple(sorted(t for t, n in df.items() if n >= df_min))
    return Vocabulary(
        terms=terms,
        thread_df=tuple(df[t] for t in terms),
        total_threads=len(threads),
        source_thread_ids=frozenset(t.id for t in threads),
    )


def tf_itf_vector(thread: Thread, vocab: Vocabulary,
                  config: TextPrepConfig | None = None) -> dict[int, float]:
    """L2-normalized sparse tf×itf weights {index: weight}.

    Out-of-vocabulary tokens are ignored; terms occurring in every training
    thread get itf = ln(1) = 0 and drop out. The squared norm is accumulated
    in index order so the result is bit-reproducible.
    """
    tf: Counter[int] = Counter()
    for token in thread_tokens(thread, config):
        idx = vocab.index.get(token)
        if idx is not None:
            tf[idx] += 1
    raw: dict[int, float] = {}
    for idx in sorted(tf):
        weight = tf[idx] * math.log(vocab.total_threads / vocab.thread_df[idx])
        if weight != 0.0:
            raw[idx] = weight
    norm_sq = 0.0
    for idx in sorted(raw):
        norm_sq += raw[idx] * raw[idx]
    if norm_sq == 0.0:
        return {}
    norm = math.sqrt(norm_sq)
    return {idx: w / norm for idx, w in raw.items()}


# ---------------------------------------------------------------------------
# Dense metadata

@dataclass(frozen=True)
class MetaFeatures:
    course_refs: int
    affirmations: int
    n_posts: int
    n_comments: int
    n_items: int
    avg_comments_per_post: float
    n_sentences: int
    n_urls: int
    n_timerefs: int

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(getattr(self, name)) for name in META_FIELD_ORDER)


def extract_meta(thread: Thread, config: TextPrepConfig | None = None) -> MetaFeatures:
    """Metadata counts over the retained (pre-intervention) thread content.

    URL/time-reference counts come from canonicalization; sentence and
    course-reference counts run on the canonicalized text (so URLs and math
    do not masquerade as sentences or references). The title counts as one
    of the thread's texts.
    """
    if config is None:
        config = default_textprep_config()
    n_posts = len(thread.posts)
    n_comments = sum(len(post.comments) for post in thread.posts)
    n_urls = n_timerefs = n_sentences = course_refs = 0
    texts = [thread.title] + [item.text for item in thread.items()]
    for text in texts:
        ct = canonicalize(text, config)
        n_urls += ct.url_count
        n_timerefs += ct.timeref_count
        n_sentences += len(split_sentences(ct.text, config.abbreviations))
        course_refs += count_course_refs(ct.text, config)
    return MetaFeatures(
        course_refs=course_refs,
        affirmations=count_affirmations(thread, config),
        n_posts=n_posts,
        n_comments=n_comments,
        n_items=n_posts + n_comments,
        avg_comments_per_post=n_comments / n_posts if n_posts else 0.0,
        n_sentences=n_sentences,
        n_urls=n_urls,
        n_timerefs=n_timerefs,
    )


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-feature (min, max) bounds learned from training metadata."""

    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(mins=tuple(d["mins"]), maxs=tuple(d["maxs"]))


def fit_minmax(metas: Iterable[MetaFeatures]) -> MinMaxScaler:
    rows = [m.as_tuple() for m in metas]
    if not rows:
        raise ValueError("cannot fit a scaler on zero training instances")
    cols = list(zip(*rows))
    return MinMaxScaler(
        mins=tuple(min(col) for col in cols),
        maxs=tuple(max(col) for col in cols),
    )


def apply_minmax(scaler: MinMaxScaler, meta: MetaFeatures) -> tuple[float, ...]:
    """Map each value to (x−min)/(max−min), clamped to [0,1]; constant → 0."""
    out = []
    for value, lo, hi in zip(meta.as_tuple(), scaler.mins, scaler.maxs):
        if hi == lo:
            out.append(0.0)
        else:
            out.append(min(1.0, max(0.0, (value - lo) / (hi - lo))))
    return tuple(out)


# ---------------------------------------------------------------------------
# Assembly

@dataclass(frozen=True)
class FeatureVector:
    """One thread's features: sparse terms, forum-type bits, dense metadata.

    Dimension layout when densified: term dims first (``n_term_dims`` of
    them), then the four forum-type bits (errata, lecture, homework, exam),
    then the enabled dense metadata dims. Disabled groups contribute nothing.
    """

    terms: dict[int, float]
    n_term_dims: int
    forum_bits: tuple[int, ...]
    dense: tuple[float, ...]

    @property
    def n_dims(self) -> int:
        return self.n_term_dims + len(self.forum_bits) + len(self.dense)

    def to_dense(self) -> np.ndarray:
        vec = np.zeros(self.n_dims)
        for idx, weight in self.terms.items():
            vec[idx] = weight
        offset = self.n_term_dims
        vec[offset:offset + len(self.forum_bits)] = self.forum_bits
        vec[offset + len(self.forum_bits):] = self.dense
        return vec


def assemble(thread: Thread, vocab: Vocabulary, scaler: MinMaxScaler,
             flags: frozenset[str] = ALL_FEATURES,
             config: TextPrepConfig | None = None) -> FeatureVector:
    """Concatenate the enabled feature groups for one thread."""
    unknown = flags - ALL_FEATURES
    if unknown:
        raise ValueError(f"unknown feature group(s) {sorted(unknown)}")
    terms = tf_itf_vector(thread, vocab, config) if "unigrams" in flags else {}
    n_term_dims = len(vocab) if "unigrams" in flags else 0
    if "forum_type" in flags:
        forum_bits = tuple(int(thread.forum_type is ft) for ft in FORUM_TYPE_ORDER)
    else:
        forum_bits = ()
    dims = meta_dims_for(flags)
    if dims:
        scaled = apply_minmax(scaler, extract_meta(thread, config))
        dense = tuple(scaled[d] for d in dims)
    else:
        dense = ()
    return FeatureVector(terms=terms, n_term_dims=n_term_dims,
                         forum_bits=forum_bits, dense=dense)


def to_matrix(fvs: Sequence[FeatureVector]) -> sparse.csr_matrix:
    """Stack feature vectors into a CSR design matrix (one row per thread)."""
    if not fvs:
        raise ValueError("no feature vectors to stack")
    n_dims = fvs[0].n_dims
    data, indices, indptr = [], [], [0]
    for fv in fvs:
        if fv.n_dims != n_dims:
            raise ValueError("feature vectors have inconsistent dimensions")
        for idx in sorted(fv.terms):
            indices.append(idx)
            data.append(fv.terms[idx])
        offset = fv.n_term_dims
        for j, bit in enumerate(fv.forum_bits):
            if bit:
                indices.append(offset + j)
                data.append(float(bit))
        offset += len(fv.forum_bits)
        for j, value in enumerate(fv.dense):
            if value != 0.0:
                indices.append(offset + j)
                data.append(value)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int32)),
        shape=(len(fvs), n_dims))


# ---------------------------------------------------------------------------
# Vectorized batch path

class CorpusMatrix:
    """Token counts and raw metadata for a fixed thread list, computed once.

    Re-slicing this structure builds per-fold design matrices without
    re-tokenizing anything: the vocabulary for a fold is the set of union
    terms present in (enough of) the fold's training rows, itf comes from
    training-row document frequencies, and min-max bounds from training-row
    metadata. Matches `assemble` + `to_matrix` to float precision.
    """

    def __init__(self, threads: Sequence[Thread],
                 config: TextPrepConfig | None = None):
        if config is None:
            config = default_textprep_config()
        self.threads = tuple(threads)
        self.thread_ids = tuple(t.id for t in self.threads)
        df: Counter[str] = Counter()
        docs: list[Counter[str]] = []
        for thread in self.threads:
            counts = Counter(thread_tokens(thread, config))
            docs.append(counts)
            df.update(counts.keys())
        self.union_terms = tuple(sorted(df))
        term_index = {t: i for i, t in enumerate(self.union_terms)}
        data, indices, indptr = [], [], [0]
        for counts in docs:
            for term in sorted(counts, key=term_index.__getitem__):
                indices.append(term_index[term])
                data.append(counts[term])
            indptr.append(len(indices))
        self.counts = sparse.csr_matrix(
            (np.asarray(data, dtype=np.float64),
             np.asarray(indices, dtype=np.int32),
             np.asarray(indptr, dtype=np.int64)),
            shape=(len(self.threads), len(self.union_terms)))
        self.meta = np.asarray([extract_meta(t, config).as_tuple()
                                for t in self.threads])
        self.forum_bits = np.asarray(
            [[float(t.forum_type is ft) for ft in FORUM_TYPE_ORDER]
             for t in self.threads])

    def __len__(self) -> int:
        return len(self.threads)

    def fold_vocabulary(self, train_idx: np.ndarray,
                        df_min: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Column mask and per-kept-column itf for a training-row subset."""
        sub = self.counts[train_idx]
        df = np.bincount(sub.indices, minlength=len(self.union_terms))
        keep = df >= max(df_min, 1)
        itf = np.log(len(train_idx) / df[keep])
        return keep, itf

    def design_matrix(self, rows: np.ndarray, keep: np.ndarray,
                      itf: np.ndarray, mins: np.ndarray, maxs: np.ndarray,
                      flags: frozenset[str]) -> sparse.csr_matrix:
        """Design matrix for ``rows`` with a vocabulary fitted elsewhere."""
        blocks = []
        if "unigrams" in flags:
            X = self.counts[rows][:, keep].multiply(itf[np.newaxis, :]).tocsr()
            norms = np.sqrt(X.multiply(X).sum(axis=1)).A1
            inv = np.divide(1.0, norms, out=np.zeros_like(norms),
                            where=norms > 0)
            X = sparse.diags(inv) @ X
            blocks.append(X)
        if "forum_type" in flags:
            blocks.append(sparse.csr_matrix(self.forum_bits[rows]))
        dims = meta_dims_for(flags)
        if dims:
            sub = self.meta[np.ix_(rows, np.asarray(dims))]
            lo, hi = mins[list(dims)], maxs[list(dims)]
            span = hi - lo
            scaled = np.divide(sub - lo, span,
                               out=np.zeros_like(sub), where=span != 0)
            np.clip(scaled, 0.0, 1.0, out=scaled)
            blocks.append(sparse.csr_matrix(scaled))
        if not blocks:
            raise ValueError("no feature groups enabled")
        if len(blocks) == 1:
            return blocks[0].tocsr()
        return sparse.hstack(blocks, format="csr")

    def fold_matrices(self, train_idx: np.ndarray, test_idx: np.ndarray,
                      flags: frozenset[str] = ALL_FEATURES, df_min: int = 1,
                      ) -> tuple[sparse.csr_matrix, sparse.csr_matrix, dict]:
        """Train/test design matrices with everything fitted on train rows.

        The returned info dict records the fold vocabulary terms and source
        thread ids so callers can assert that no held-out thread leaked into
        the fitted structures.
        """
        keep, itf = self.fold_vocabulary(train_idx, df_min)
        mins = self.meta[train_idx].min(axis=0)
        maxs = self.meta[train_idx].max(axis=0)
        X_train = self.design_matrix(train_idx, keep, itf, mins, maxs, flags)
        X_test = self.design_matrix(test_idx, keep, itf, mins, maxs, flags)
        info = {
            "vocabulary_terms": tuple(t for t, k in zip(self.union_terms, keep) if k),
            "source_thread_ids": frozenset(self.thread_ids[i] for i in train_idx),
            "n_dims": X_train.shape[1],
        }
        return X_train, X_test, info
