"""Target passage reader: concatenate candidate answer passages into one
context (title blocks included, "yes"/"no" sentinels prefixed), train with an
answer-span loss plus an auxiliary title-span loss, and decode answer spans.

Reader training passages come from two-fold cross-prediction: a reasoner
trained on one half of the questions predicts passages for the other half,
so the reader never trains on passages predicted by a model that saw that
question's label.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Passage, QARecord, TokenSeq, tokenize
from .errors import ValidationError
from .metrics import em_f1, normalize_answer
from .numcore import Tensor, adam_step, add, backward, scale
from .span_model import SpanModel, SpanScores, run_span_model, span_nll_loss

SENTINELS = ("yes", "no")
DEFAULT_MAX_ANSWER_LEN = 30


@dataclass(frozen=True)
class TokenOrigin:
    kind: str  # "sentinel" | "title" | "text"
    passage_id: str | None
    char_start: int
    char_end: int


@dataclass
class ReaderContext:
    tokens: list[str]
    origins: list[TokenOrigin]
    passages: list[Passage]
    title_spans: dict[str, tuple[int, int]]  # passage id -> inclusive token span of its title block

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def titles(self) -> list[str]:
        return [p.title for p in self.passages]


def build_reader_context(passages: list[Passage], max_tokens: int | None = None) -> ReaderContext:
    """Concatenate [title tokens + passage tokens] blocks after the yes/no
    sentinels. Whole passages beyond the token cap are dropped."""
    tokens: list[str] = list(SENTINELS)
    origins: list[TokenOrigin] = [
        TokenOrigin("sentinel", None, 0, 0) for _ in SENTINELS
    ]
    used: list[Passage] = []
    title_spans: dict[str, tuple[int, int]] = {}
    for passage in passages:
        title_ts = tokenize(passage.title)
        body_ts = passage.tokens if passage.tokens is not None else tokenize(passage.text)
        block_len = len(title_ts) + len(body_ts)
        if max_tokens is not None and used and len(tokens) + block_len > max_tokens:
            break
        start = len(tokens)
        for tok, (cs, ce) in zip(title_ts.tokens, title_ts.char_offsets):
            tokens.append(tok)
            origins.append(TokenOrigin("title", passage.id, cs, ce))
        if title_ts.tokens:
            title_spans[passage.id] = (start, len(tokens) - 1)
        for tok, (cs, ce) in zip(body_ts.tokens, body_ts.char_offsets):
            tokens.append(tok)
            origins.append(TokenOrigin("text", passage.id, cs, ce))
        used.append(passage)
    return ReaderContext(tokens=tokens, origins=origins, passages=used, title_spans=title_spans)


def locate_answer_span(
    context: ReaderContext,
    answer: str,
    max_len: int = DEFAULT_MAX_ANSWER_LEN,
) -> tuple[int, int] | None:
    """First token window whose space-joined text normalizes to the normalized
    answer; earlier (then shorter) windows win, so earlier passages are
    preferred."""
    target = normalize_answer(answer)
    if not target:
        return None
    n_target_tokens = len(target.split())
    T = len(context.tokens)
    articles = ("a", "an", "the")
    for s in range(T):
        parts: list[str] = []
        non_article = 0
        for e in range(s, min(T, s + max_len)):
            tok = context.tokens[e]
            parts.append(tok)
            if tok not in articles:
                non_article += 1
            if non_article > n_target_tokens:
                break  # no longer window at this start can still match
            if normalize_answer(" ".join(parts)) == target:
                return (s, e)
    return None


@dataclass
class ReaderExample:
    question_id: str
    question: TokenSeq
    context: ReaderContext
    answer: str
    answer_span: tuple[int, int] | None = None
    title_span: tuple[int, int] | None = None
    predicted_by_fold: str | None = None


def make_reader_example(
    record: QARecord,
    passages: list[Passage],
    *,
    max_tokens: int | None = None,
    max_answer_len: int = DEFAULT_MAX_ANSWER_LEN,
    predicted_by_fold: str | None = None,
) -> tuple[ReaderExample | None, str | None]:
    """Build a training example; returns (None, reason) when the context does
    not contain the answer."""
    context = build_reader_context(passages, max_tokens=max_tokens)
    span = locate_answer_span(context, record.answer, max_len=max_answer_len)
    if span is None:
        return None, "answer not found in context"
    title_span = None
    origin = context.origins[span[0]]
    if origin.passage_id is not None:
        title_span = context.title_spans.get(origin.passage_id)
    example = ReaderExample(
        question_id=record.id,
        question=tokenize(record.question),
        context=context,
        answer=record.answer,
        answer_span=span,
        title_span=title_span,
        predicted_by_fold=predicted_by_fold,
    )
    return example, None


# ---------------------------------------------------------------------------
# folds


def two_fold_split(question_ids: list[str], seed: int) -> tuple[list[str], list[str]]:
    """Deterministic disjoint halves of the question ids (sizes differ by at
    most one)."""
    rng = np.random.default_rng([seed, 2])
    ids = sorted(question_ids)
    order = rng.permutation(len(ids))
    shuffled = [ids[int(i)] for i in order]
    half = (len(shuffled) + 1) // 2
    return sorted(shuffled[:half]), sorted(shuffled[half:])


def build_reader_training_set(questions, corpus, index, cfg, seed: int, linker=None):
    """Assemble reader training examples by two-fold cross-prediction.

    Bridge questions are split into two deterministic folds; a reasoner
    trained on each fold predicts answer passages for the other, so no
    example's context comes from a model that saw its label. Comparison
    questions get retriever-built contexts. Returns (examples, skips,
    fold_assignments).

    This is the in-memory form; the cross-predict and train-reader pipeline
    stages run the same procedure with on-disk artifacts between stages.
    """
    from .bridge import (
        BridgeTrainConfig,
        derive_bridge_labels,
        expand_with_entity_linking,
        init_bridge_model,
        predict_ranked_titles,
        prepare_question_inputs,
        train_bridge_reasoner,
    )
    from .retrieval import retrieve_start_passages
    from .span_model import build_vocab

    labels, label_skips = derive_bridge_labels(questions, corpus, seed)
    labeled = {lbl.question_id for lbl in labels}
    bridge_questions = [q for q in questions if q.qtype == "bridge" and q.id in labeled]
    by_qid = {q.id: q for q in bridge_questions}

    def starts_for(record):
        results = retrieve_start_passages(
            index, tokenize(record.question), cfg.k, k1=cfg.k1, b=cfg.b,
            title_weight=cfg.title_weight,
        )
        passages = [corpus.by_id[r.passage_id] for r in results]
        if cfg.entity_linking and linker is not None:
            passages = passages + expand_with_entity_linking(
                record.question, linker, corpus, passages, top_n=cfg.top_n_el
            )
        return passages

    start_sets = {q.id: starts_for(q) for q in bridge_questions}
    fold_a, fold_b = two_fold_split(list(by_qid), seed)
    folds = {"A": fold_a, "B": fold_b}
    cross: dict[str, tuple[str, list[str]]] = {}
    for fold_name, other in (("A", "B"), ("B", "A")):
        fold_questions = [by_qid[qid] for qid in folds[fold_name]]
        inputs = prepare_question_inputs(fold_questions, labels, start_sets, corpus)
        model = init_bridge_model(
            build_vocab(
                [p.tokens.tokens for p in corpus.passages]
                + [tokenize(p.title).tokens for p in corpus.passages]
                + [tokenize(q.question).tokens for q in questions]
                + [SENTINELS]
            ),
            cfg.embed_dim, cfg.gru_hidden, cfg.lstm_hidden, cfg.dropout,
            np.random.default_rng([seed, 300 if fold_name == "A" else 301]),
            abstract_max_tokens=cfg.abstract_max_tokens,
        )
        train_bridge_reasoner(
            model, inputs, corpus,
            BridgeTrainConfig(lr=cfg.lr, epochs=cfg.bridge_epochs, batch_size=cfg.batch_size,
                              seed=seed, early_stop_hits1=cfg.bridge_early_stop_hits1),
        )
        for qid in folds[other]:
            ranked = predict_ranked_titles(
                model, by_qid[qid], start_sets[qid], corpus, k=cfg.reader_max_passages
            )
            cross[qid] = (fold_name, [t for t, _ in ranked])

    examples: list[ReaderExample] = []
    skips: list[dict] = list(label_skips)
    for q in questions:
        if q.qtype == "bridge":
            if q.id not in cross:
                if q.id in labeled:
                    skips.append({"qid": q.id, "reason": "no cross-prediction"})
                continue
            fold, titles = cross[q.id]
            passages = [corpus.by_title[t] for t in titles if t in corpus.by_title]
            if cfg.entity_linking and linker is not None:
                passages = passages + expand_with_entity_linking(
                    q.question, linker, corpus, passages, top_n=cfg.top_n_el
                )
        else:
            fold = None
            passages = starts_for(q)[: cfg.reader_max_passages]
        example, reason = make_reader_example(
            q, passages, max_tokens=cfg.reader_context_cap,
            max_answer_len=cfg.max_answer_len, predicted_by_fold=fold,
        )
        if example is None:
            skips.append({"qid": q.id, "reason": reason})
        else:
            examples.append(example)
    return examples, skips, folds


# ---------------------------------------------------------------------------
# loss and decoding


def reader_loss(
    model: SpanModel,
    example: ReaderExample,
    aux_weight: float = 1.0,
    *,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, SpanScores]:
    """Answer-span NLL plus aux_weight times the title-span NLL, both over the
    full concatenated context. The auxiliary term is omitted when the example
    has no gold title span."""
    if example.answer_span is None:
        raise ValidationError(f"example {example.question_id!r} has no gold answer span")
    _, scores = run_span_model(
        model, example.question, example.context.tokens, training=training, rng=rng
    )
    loss = span_nll_loss(scores, *example.answer_span)
    if aux_weight != 0.0 and example.title_span is not None:
        loss = add(loss, scale(span_nll_loss(scores, *example.title_span), aux_weight))
    return loss, scores


def best_span(
    start_logits: np.ndarray,
    end_logits: np.ndarray,
    max_len: int = DEFAULT_MAX_ANSWER_LEN,
) -> tuple[int, int]:
    """Argmax of start_logit[s] + end_logit[e] over s <= e < s + max_len;
    ties by smaller s, then smaller e."""
    T = start_logits.shape[0]
    best = (-np.inf, 0, 0)
    for s in range(T):
        hi = min(T, s + max_len)
        window = start_logits[s] + end_logits[s:hi]
        e_off = int(np.argmax(window))  # first occurrence wins -> smallest e
        score = float(window[e_off])
        if score > best[0]:
            best = (score, s, s + e_off)
    return best[1], best[2]


def span_to_text(context: ReaderContext, s: int, e: int) -> str:
    """Original character-level text of the span. Spans covering a sentinel
    decode to that literal; spans crossing block boundaries fall back to
    space-joined tokens."""
    for pos in range(s, e + 1):
        if context.origins[pos].kind == "sentinel":
            return context.tokens[pos]
    first, last = context.origins[s], context.origins[e]
    if (
        first.passage_id == last.passage_id
        and first.kind == last.kind
        and first.passage_id is not None
    ):
        passage = next(p for p in context.passages if p.id == first.passage_id)
        source = passage.title if first.kind == "title" else passage.text
        return source[first.char_start : last.char_end]
    return " ".join(context.tokens[s : e + 1])


def decode_answer(
    scores,
    context: ReaderContext,
    max_len: int = DEFAULT_MAX_ANSWER_LEN,
) -> str:
    """Best valid span decoded to its original text (or a sentinel literal)."""
    if isinstance(scores, SpanScores):
        start, end = scores.start_logits.data, scores.end_logits.data
    else:
        start, end = scores
    s, e = best_span(np.asarray(start, dtype=np.float64), np.asarray(end, dtype=np.float64), max_len)
    return span_to_text(context, s, e)


# ---------------------------------------------------------------------------
# training


@dataclass
class ReaderTrainConfig:
    lr: float = 1e-3
    epochs: int = 80
    batch_size: int = 1
    aux_weight: float = 1.0
    seed: int = 13
    early_stop_em: float = 0.95
    max_answer_len: int = DEFAULT_MAX_ANSWER_LEN


def train_reader(model: SpanModel, examples: list[ReaderExample], cfg: ReaderTrainConfig) -> dict:
    """Adam training over the joint span loss, early-stopped on running train EM."""
    rng = np.random.default_rng([cfg.seed, 11])
    history: list[dict] = []
    started = time.monotonic()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(examples))
        losses: list[float] = []
        em_sum = 0
        batch: list[Tensor] = []
        for pos, idx in enumerate(order):
            ex = examples[int(idx)]
            loss, scores = reader_loss(model, ex, cfg.aux_weight, training=True, rng=rng)
            losses.append(loss.item())
            predicted = decode_answer(scores, ex.context, cfg.max_answer_len)
            em_sum += em_f1(predicted, ex.answer)[0]
            batch.append(loss)
            if len(batch) >= cfg.batch_size or pos == len(order) - 1:
                total = batch[0]
                for extra in batch[1:]:
                    total = add(total, extra)
                backward(total)
                adam_step(model.store, model.store.gradients(), lr=cfg.lr)
                model.store.zero_grad()
                batch = []
        train_em = em_sum / len(examples) if examples else 0.0
        history.append(
            {
                "epoch": epoch,
                "mean_loss": float(np.mean(losses)) if losses else None,
                "train_em": train_em,
            }
        )
        if train_em >= cfg.early_stop_em:
            break
    return {
        "epochs_run": len(history),
        "history": history,
        "train_seconds": time.monotonic() - started,
        "n_examples": len(examples),
    }


# ---------------------------------------------------------------------------
# end-to-end answering


@dataclass
class Prediction:
    qid: str
    answer: str
    passages: list[str]  # titles fed to the reader, in order
    ranked_titles: list[str] = field(default_factory=list)
    ranked_scored: list[tuple[str, float]] = field(default_factory=list)  # reasoner scores
    fallback: bool = False


def read_and_decode(
    model: SpanModel,
    record: QARecord,
    passages: list[Passage],
    *,
    max_tokens: int | None = None,
    max_answer_len: int = DEFAULT_MAX_ANSWER_LEN,
) -> tuple[str, ReaderContext]:
    context = build_reader_context(passages, max_tokens=max_tokens)
    _, scores = run_span_model(model, tokenize(record.question), context.tokens)
    return decode_answer(scores, context, max_answer_len), context
