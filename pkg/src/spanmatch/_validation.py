"""Input validation helpers for the estimator API."""
from __future__ import annotations

from typing import Iterable, Sequence

from .corpus import (
    CorpusError,
    EntitySpan,
    LabeledSentence,
    Sentence,
    SupportExample,
    SupportSet,
    build_support_set,
    make_tokens,
)


def check_token_sequences(X) -> list[list[str]]:
    """Validate X as a list of non-empty token-string sequences."""
    if isinstance(X, str):
        raise TypeError("X must be a sequence of token sequences, not a single string")
    try:
        rows = list(X)
    except TypeError as exc:
        raise TypeError("X must be an iterable of token sequences") from exc
    out: list[list[str]] = []
    for i, row in enumerate(rows):
        if isinstance(row, str):
            raise TypeError(
                f"X[{i}] is a string; pass pre-tokenized sentences (lists of tokens)"
            )
        tokens = [str(t) for t in row]
        if not tokens:
            raise ValueError(f"X[{i}] is empty; sentences need at least one token")
        if any(not t for t in tokens):
            raise ValueError(f"X[{i}] contains an empty token")
        out.append(tokens)
    return out


def check_span_labels(y, n_sentences: int) -> list[list[tuple[int, int, str]]]:
    """Validate y as per-sentence lists of (start, end, entity_type) triples."""
    rows = list(y)
    if len(rows) != n_sentences:
        raise ValueError(f"y has {len(rows)} rows but X has {n_sentences} sentences")
    out: list[list[tuple[int, int, str]]] = []
    for i, row in enumerate(rows):
        triples = []
        for item in row:
            try:
                start, end, entity_type = item
            except (TypeError, ValueError) as exc:
                raise ValueError(
                    f"y[{i}] entries must be (start, end, entity_type) triples"
                ) from exc
            triples.append((int(start), int(end), str(entity_type)))
        out.append(triples)
    return out


def as_labeled_sentences(
    X, y=None, id_prefix: str = "x"
) -> list[LabeledSentence]:
    """Build validated LabeledSentences from token sequences and span triples."""
    if X and isinstance(X[0] if isinstance(X, (list, tuple)) else None, LabeledSentence):
        return list(X)
    tokens = check_token_sequences(X)
    labels = check_span_labels(y, len(tokens)) if y is not None else [[] for _ in tokens]
    sentences = []
    for i, (texts, triples) in enumerate(zip(tokens, labels)):
        spans = tuple(
            EntitySpan(start, end, entity_type)
            for start, end, entity_type in sorted(triples)
        )
        try:
            sentences.append(
                LabeledSentence(
                    sentence=Sentence(make_tokens(texts), source_id=f"{id_prefix}#{i}"),
                    spans=spans,
                )
            )
        except CorpusError as exc:
            raise ValueError(f"invalid annotation for sentence {i}: {exc}") from exc
    return sentences


def as_support_set(support) -> SupportSet:
    """Accept a SupportSet or an iterable of SupportExamples."""
    if isinstance(support, SupportSet):
        return support
    if support is None:
        raise ValueError("a support set is required; call set_support() or pass one")
    examples = list(support)
    if not all(isinstance(ex, SupportExample) for ex in examples):
        raise TypeError("support must be a SupportSet or an iterable of SupportExample")
    return build_support_set(examples)
