"""Inverted index and hybrid lexical retrieval of start passages.

Scoring is BM25 over passage bodies plus a weighted tf-idf cosine over
title tokens. The index is immutable after build; concurrent scoring over
questions is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import Corpus, TokenSeq, tokenize
from .errors import ValidationError

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
DEFAULT_TITLE_WEIGHT = 1.0


@dataclass(frozen=True)
class FieldIndex:
    """Postings and statistics for one indexed field (body or title)."""

    postings: dict[str, list[tuple[str, int]]]  # term -> [(passage_id, tf)]
    doc_len: dict[str, int]
    avg_doc_len: float
    N: int
    df: dict[str, int]
    tf: dict[str, dict[str, int]]  # term -> passage_id -> tf, for O(1) scoring


@dataclass(frozen=True)
class InvertedIndex:
    body: FieldIndex
    title: FieldIndex

    @property
    def N(self) -> int:
        return self.body.N


@dataclass(frozen=True)
class RetrievalResult:
    passage_id: str
    score: float
    rank: int


def _build_field(texts: dict[str, TokenSeq]) -> FieldIndex:
    postings: dict[str, list[tuple[str, int]]] = {}
    tf_map: dict[str, dict[str, int]] = {}
    doc_len: dict[str, int] = {}
    for pid, toks in texts.items():
        doc_len[pid] = len(toks)
        counts: dict[str, int] = {}
        for t in toks.tokens:
            counts[t] = counts.get(t, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((pid, tf))
            tf_map.setdefault(term, {})[pid] = tf
    N = len(texts)
    df = {term: len(plist) for term, plist in postings.items()}
    avg = sum(doc_len.values()) / N if N else 0.0
    return FieldIndex(postings, doc_len, avg, N, df, tf_map)


def build_index(corpus: Corpus) -> InvertedIndex:
    if len(corpus) == 0:
        raise ValidationError("cannot build an index over an empty corpus")
    body = _build_field({p.id: p.tokens for p in corpus.passages})
    title = _build_field({p.id: tokenize(p.title) for p in corpus.passages})
    return InvertedIndex(body, title)


def bm25_idf(N: int, df: int) -> float:
    return math.log((N - df + 0.5) / (df + 0.5) + 1.0)


def _bm25(field: FieldIndex, question: TokenSeq, passage_id: str, k1: float, b: float) -> float:
    dl = field.doc_len[passage_id]
    score = 0.0
    for term in question.tokens:
        tf = field.tf.get(term, {}).get(passage_id)
        if not tf:
            continue
        idf = bm25_idf(field.N, field.df[term])
        denom = tf + k1 * (1.0 - b + b * dl / field.avg_doc_len)
        score += idf * tf * (k1 + 1.0) / denom
    return score


def _smooth_idf(N: int, df: int) -> float:
    # smoothed positive idf for the tf-idf title channel
    return math.log((1.0 + N) / (1.0 + df)) + 1.0


def _tfidf_cosine(field: FieldIndex, question: TokenSeq, passage_id: str) -> float:
    q_counts: dict[str, int] = {}
    for t in question.tokens:
        q_counts[t] = q_counts.get(t, 0) + 1
    q_vec = {t: c * _smooth_idf(field.N, field.df.get(t, 0)) for t, c in q_counts.items()}
    d_vec = {}
    for term, per_doc in field.tf.items():
        tf = per_doc.get(passage_id)
        if tf:
            d_vec[term] = tf * _smooth_idf(field.N, field.df[term])
    dot = sum(w * d_vec[t] for t, w in q_vec.items() if t in d_vec)
    if dot == 0.0:
        return 0.0
    qn = math.sqrt(sum(w * w for w in q_vec.values()))
    dn = math.sqrt(sum(w * w for w in d_vec.values()))
    return dot / (qn * dn)


def hybrid_score(
    index: InvertedIndex,
    question: TokenSeq,
    passage_id: str,
    *,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    title_weight: float = DEFAULT_TITLE_WEIGHT,
) -> float:
    """BM25 over the passage body plus title_weight * tf-idf cosine over the title.

    BM25 sums over question token occurrences with
    idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1).
    """
    if passage_id not in index.body.doc_len:
        raise KeyError(f"unknown passage id {passage_id!r}")
    score = _bm25(index.body, question, passage_id, k1, b)
    if title_weight != 0.0:
        score += title_weight * _tfidf_cosine(index.title, question, passage_id)
    return score


def _field_to_dict(field: FieldIndex) -> dict:
    return {
        "postings": {t: [[pid, tf] for pid, tf in plist] for t, plist in field.postings.items()},
        "doc_len": field.doc_len,
        "avg_doc_len": field.avg_doc_len,
        "N": field.N,
        "df": field.df,
    }


def _field_from_dict(d: dict) -> FieldIndex:
    postings = {t: [(pid, int(tf)) for pid, tf in plist] for t, plist in d["postings"].items()}
    tf_map: dict[str, dict[str, int]] = {}
    for term, plist in postings.items():
        tf_map[term] = {pid: tf for pid, tf in plist}
    return FieldIndex(
        postings=postings,
        doc_len={pid: int(v) for pid, v in d["doc_len"].items()},
        avg_doc_len=float(d["avg_doc_len"]),
        N=int(d["N"]),
        df={t: int(v) for t, v in d["df"].items()},
        tf=tf_map,
    )


def index_to_dict(index: InvertedIndex) -> dict:
    return {"body": _field_to_dict(index.body), "title": _field_to_dict(index.title)}


def results_record(qid: str, results: list["RetrievalResult"]) -> dict:
    """One line of the retrieval dump format: {"qid", "passages": [{"id", "score"}]}."""
    return {"qid": qid, "passages": [{"id": r.passage_id, "score": r.score} for r in results]}


def index_from_dict(d: dict) -> InvertedIndex:
    return InvertedIndex(body=_field_from_dict(d["body"]), title=_field_from_dict(d["title"]))


def retrieve_start_passages(
    index: InvertedIndex,
    question: TokenSeq,
    k: int,
    *,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    title_weight: float = DEFAULT_TITLE_WEIGHT,
) -> list[RetrievalResult]:
    """Top-k passages by hybrid score, descending, ties broken by passage id.

    Zero-score passages are never returned, so fewer than k results are
    possible on small corpora or rare-term questions.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    candidates: set[str] = set()
    for term in set(question.tokens):
        for pid, _ in index.body.postings.get(term, ()):
            candidates.add(pid)
        if title_weight != 0.0:
            for pid, _ in index.title.postings.get(term, ()):
                candidates.add(pid)
    scored = []
    for pid in candidates:
        s = hybrid_score(index, question, pid, k1=k1, b=b, title_weight=title_weight)
        if s > 0.0:
            scored.append((pid, s))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [
        RetrievalResult(passage_id=pid, score=s, rank=i + 1)
        for i, (pid, s) in enumerate(scored[:k])
    ]
