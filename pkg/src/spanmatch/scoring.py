"""Train-free inference: per-type span prediction and cross-type aggregation.

Hard attention sums, per position, the K largest boundary dot products across
a type's supports with equal weight.  The soft variants reuse the training
kernel over all supports (optionally filtered to the K highest sentence-level
attention weights, keeping the original weights).  Voting scores each support
separately and lets each cast one vote for its best span.

Per-type span selection enumerates every candidate (start <= end, so
single-token entities are allowed) plus the sentinel pair; a sentinel winner
means the query holds no entity of that type.  Cross-type aggregation sorts by
span score and greedily drops overlaps; the voting aggregator keeps overlaps.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import torch

from .corpus import Sentence, SupportSet, Token, token_texts
from .encoders import EncodedSequence, Encoder, SupportEncoding, encode_support_set
from .similarity import sentence_attention, token_boundary_similarity
from .training import BoundaryScores, attention_weighted_scores

log = logging.getLogger(__name__)

ALGORITHMS = ("hard-attention", "soft-attention", "topk-soft-attention", "voting")


@dataclass
class ScoringConfig:
    algorithm: str = "hard-attention"
    k: int = 5
    temperature: float = 1.0
    top_n: int = 5
    max_span_length: int | None = None

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown scoring algorithm {self.algorithm!r}")
        if self.k < 1 or self.top_n < 1:
            raise ValueError("k and top_n must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.max_span_length is not None and self.max_span_length < 1:
            raise ValueError("max_span_length must be >= 1 when set")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "k": self.k,
            "temperature": self.temperature,
            "top_n": self.top_n,
            "max_span_length": self.max_span_length,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoringConfig":
        return cls(**data)


@dataclass
class TraceEntry:
    """One support example's contribution to a retained span."""

    support_id: str
    start_dot: float
    end_dot: float
    attention_weight: float

    def to_dict(self) -> dict:
        return {
            "support_id": self.support_id,
            "start_dot": self.start_dot,
            "end_dot": self.end_dot,
            "attention_weight": self.attention_weight,
        }


@dataclass
class ScoredSpan:
    """Candidate span in query token coordinates; ``start is None`` means no-span."""

    start: int | None
    end: int | None
    p_start: float
    p_end: float
    span_score: float
    entity_type: str
    trace: tuple[TraceEntry, ...] = ()

    @property
    def is_no_span(self) -> bool:
        return self.start is None

    def overlaps(self, other: "ScoredSpan") -> bool:
        if self.is_no_span or other.is_no_span:
            return False
        return self.start <= other.end and other.start <= self.end

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "entity_type": self.entity_type,
            "p_start": self.p_start,
            "p_end": self.p_end,
            "span_score": self.span_score,
            "trace": [t.to_dict() for t in self.trace],
        }


@dataclass
class Prediction:
    query_tokens: list[str]
    spans: list[ScoredSpan] = field(default_factory=list)
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "query_tokens": self.query_tokens,
            "spans": [s.to_dict() for s in self.spans],
            "truncated": self.truncated,
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=indent)

    @property
    def tuples(self) -> list[tuple[int, int, str]]:
        return [(s.start, s.end, s.entity_type) for s in self.spans]


def hard_attention_scores(
    q: EncodedSequence, supports: Sequence[SupportEncoding], k: int
) -> BoundaryScores:
    """Per position, sum the K largest boundary dots across supports (weight 1 each)."""
    if not supports:
        raise ValueError("need at least one support encoding")
    sims = [token_boundary_similarity(q, s) for s in supports]
    start = torch.stack([s.start_sim for s in sims])   # (m, L+1)
    end = torch.stack([s.end_sim for s in sims])
    keep = min(k, len(supports))
    p_start = start.topk(keep, dim=0).values.sum(dim=0)
    p_end = end.topk(keep, dim=0).values.sum(dim=0)
    entity_type = supports[0].example.entity_type if supports[0].example else ""
    return BoundaryScores(p_start=p_start, p_end=p_end, entity_type=entity_type)


def soft_attention_scores(
    q: EncodedSequence, supports: Sequence[SupportEncoding], temperature: float
) -> BoundaryScores:
    """Soft-attention weighted sum over all of a type's supports (raw scores)."""
    return attention_weighted_scores(q, supports, temperature)


def topk_soft_attention_scores(
    q: EncodedSequence,
    supports: Sequence[SupportEncoding],
    k: int,
    temperature: float,
) -> BoundaryScores:
    """Soft-attention sum restricted to the K supports with highest weight.

    The surviving weights are kept as-is, not renormalized, so with K >= m
    this is exactly the all-support soft score.
    """
    if not supports:
        raise ValueError("need at least one support encoding")
    weights = sentence_attention(
        q.sentence_rep, [s.base.sentence_rep for s in supports], temperature
    ).weights
    keep = min(k, len(supports))
    top_idx = torch.topk(weights, keep).indices
    start = torch.zeros_like(q.vectors[:, 0])
    end = torch.zeros_like(start)
    for i in top_idx:
        sims = token_boundary_similarity(q, supports[int(i)])
        start = start + weights[i] * sims.start_sim
        end = end + weights[i] * sims.end_sim
    entity_type = supports[0].example.entity_type if supports[0].example else ""
    return BoundaryScores(p_start=start, p_end=end, entity_type=entity_type)


def top_span(scores: BoundaryScores, cfg: ScoringConfig | None = None) -> ScoredSpan:
    """Best-scoring candidate span for one entity type.

    Candidates are all (start, end) pairs with start <= end within
    ``max_span_length`` plus the sentinel pair; score is p_start + p_end.
    Ties keep the earliest candidate, with the sentinel considered first.
    """
    cfg = cfg or ScoringConfig()
    p_start = scores.p_start
    p_end = scores.p_end
    length = scores.length - 1
    best_start: int | None = None
    best_end: int | None = None
    best_ps = float(p_start[0])
    best_pe = float(p_end[0])
    best = best_ps + best_pe
    max_len = cfg.max_span_length if cfg.max_span_length is not None else length
    for i in range(1, length + 1):
        for j in range(i, min(i + max_len - 1, length) + 1):
            score = float(p_start[i]) + float(p_end[j])
            if score > best:
                best = score
                best_start, best_end = i - 1, j - 1
                best_ps, best_pe = float(p_start[i]), float(p_end[j])
    return ScoredSpan(
        start=best_start,
        end=best_end,
        p_start=best_ps,
        p_end=best_pe,
        span_score=best_ps + best_pe,
        entity_type=scores.entity_type,
    )


SupportInput = SupportSet | Mapping[str, Sequence[SupportEncoding]]


def _as_encodings(
    support_set: SupportInput, encoder: Encoder
) -> dict[str, Sequence[SupportEncoding]]:
    if isinstance(support_set, SupportSet):
        return encode_support_set(support_set, encoder)
    return dict(support_set)


def _type_scores(
    q: EncodedSequence, encodings: Sequence[SupportEncoding], cfg: ScoringConfig
) -> BoundaryScores:
    if cfg.algorithm == "hard-attention":
        return hard_attention_scores(q, encodings, cfg.k)
    if cfg.algorithm == "soft-attention":
        return soft_attention_scores(q, encodings, cfg.temperature)
    if cfg.algorithm == "topk-soft-attention":
        return topk_soft_attention_scores(q, encodings, cfg.k, cfg.temperature)
    raise ValueError(f"no per-type scores for algorithm {cfg.algorithm!r}")


def _sort_key(span: ScoredSpan):
    return (-span.span_score, span.start, span.end, span.entity_type)


def remove_overlaps(spans: Sequence[ScoredSpan]) -> list[ScoredSpan]:
    """Greedy selection: keep the top-scoring span, then the next that fits."""
    kept: list[ScoredSpan] = []
    for candidate in sorted(spans, key=_sort_key):
        if all(not candidate.overlaps(k) for k in kept):
            kept.append(candidate)
    return kept


def _hard_trace(
    q: EncodedSequence,
    encodings: Sequence[SupportEncoding],
    span: ScoredSpan,
    cfg: ScoringConfig,
) -> tuple[TraceEntry, ...]:
    """Dots at the winning boundaries; weight 1 marks membership in a top-K set."""
    start_pos = 0 if span.start is None else span.start + 1
    end_pos = 0 if span.end is None else span.end + 1
    start_dots = [float(q.vectors[start_pos] @ s.boundary_start) for s in encodings]
    end_dots = [float(q.vectors[end_pos] @ s.boundary_end) for s in encodings]
    keep = min(cfg.k, len(encodings))
    top_start = set(sorted(range(len(encodings)), key=lambda i: -start_dots[i])[:keep])
    top_end = set(sorted(range(len(encodings)), key=lambda i: -end_dots[i])[:keep])
    entries = [
        TraceEntry(
            support_id=s.support_id or str(i),
            start_dot=start_dots[i],
            end_dot=end_dots[i],
            attention_weight=1.0 if (i in top_start or i in top_end) else 0.0,
        )
        for i, s in enumerate(encodings)
    ]
    entries.sort(key=lambda e: (-(e.start_dot + e.end_dot), e.support_id))
    return tuple(entries)


def _soft_trace(
    q: EncodedSequence,
    encodings: Sequence[SupportEncoding],
    span: ScoredSpan,
    cfg: ScoringConfig,
) -> tuple[TraceEntry, ...]:
    weights = sentence_attention(
        q.sentence_rep, [s.base.sentence_rep for s in encodings], cfg.temperature
    ).weights
    if cfg.algorithm == "topk-soft-attention":
        keep = min(cfg.k, len(encodings))
        top_idx = set(int(i) for i in torch.topk(weights, keep).indices)
    else:
        top_idx = set(range(len(encodings)))
    start_pos = 0 if span.start is None else span.start + 1
    end_pos = 0 if span.end is None else span.end + 1
    entries = [
        TraceEntry(
            support_id=s.support_id or str(i),
            start_dot=float(q.vectors[start_pos] @ s.boundary_start),
            end_dot=float(q.vectors[end_pos] @ s.boundary_end),
            attention_weight=float(weights[i]) if i in top_idx else 0.0,
        )
        for i, s in enumerate(encodings)
    ]
    entries.sort(key=lambda e: (-e.attention_weight, -(e.start_dot + e.end_dot), e.support_id))
    return tuple(entries)


def predict(
    query: Sentence | Sequence[Token | str],
    support_set: SupportInput,
    encoder: Encoder,
    cfg: ScoringConfig | None = None,
) -> Prediction:
    """Recognize entities in a query using only the support set as evidence.

    Per entity type the configured algorithm scores all positions and the top
    span is taken; sentinel winners are dropped.  Surviving spans are sorted
    by score and overlaps removed greedily.  Every retained span carries a
    per-support trace.
    """
    cfg = cfg or ScoringConfig()
    if cfg.algorithm == "voting":
        return vote_predict(query, support_set, encoder, cfg)
    tokens = query.tokens if isinstance(query, Sentence) else query
    with torch.no_grad():
        encodings = _as_encodings(support_set, encoder)
        q = encoder.encode(tokens)
        winners: list[ScoredSpan] = []
        for entity_type, sups in encodings.items():
            if not sups:
                log.warning("entity type %r has no support examples; skipped", entity_type)
                continue
            scores = _type_scores(q, sups, cfg)
            span = top_span(scores, cfg)
            if span.is_no_span:
                continue
            if cfg.algorithm == "hard-attention":
                span.trace = _hard_trace(q, sups, span, cfg)
            else:
                span.trace = _soft_trace(q, sups, span, cfg)
            winners.append(span)
    return Prediction(
        query_tokens=token_texts(tokens),
        spans=remove_overlaps(winners),
        truncated=q.truncated,
    )


def _top_n_spans(
    sims_start: torch.Tensor,
    sims_end: torch.Tensor,
    cfg: ScoringConfig,
) -> list[tuple[int, int, float, float]]:
    """Candidate spans from the top-n start and top-n end positions (sentinel excluded)."""
    length = sims_start.shape[0] - 1
    n = min(cfg.top_n, length)
    start_vals = sims_start[1:]
    end_vals = sims_end[1:]
    start_idx = sorted(range(length), key=lambda i: (-float(start_vals[i]), i))[:n]
    end_idx = sorted(range(length), key=lambda i: (-float(end_vals[i]), i))[:n]
    max_len = cfg.max_span_length if cfg.max_span_length is not None else length
    spans: list[tuple[int, int, float, float]] = []
    for s in start_idx:
        for e in end_idx:
            if s <= e and (e - s + 1) <= max_len:
                spans.append((s, e, float(start_vals[s]), float(end_vals[e])))
    spans.sort(key=lambda t: (-(t[2] + t[3]), t[0], t[1]))
    return spans[: cfg.top_n]


def vote_predict(
    query: Sentence | Sequence[Token | str],
    support_set: SupportInput,
    encoder: Encoder,
    cfg: ScoringConfig | None = None,
) -> Prediction:
    """Heuristic voting: each support example casts one vote for its best span.

    Per type, every support is scored on its own boundary dots; the support's
    vote is the top item of its candidate list.  The most-voted span wins the
    type (ties break by higher summed span score, then leftmost span).  Type
    winners are aggregated without overlap removal and without a no-span
    option, so overlapping predictions across types are possible.
    """
    cfg = cfg or ScoringConfig(algorithm="voting")
    tokens = query.tokens if isinstance(query, Sentence) else query
    with torch.no_grad():
        encodings = _as_encodings(support_set, encoder)
        q = encoder.encode(tokens)
        winners: list[ScoredSpan] = []
        for entity_type, sups in encodings.items():
            if not sups:
                log.warning("entity type %r has no support examples; skipped", entity_type)
                continue
            votes: dict[tuple[int, int], list[tuple[int, float, float]]] = {}
            for i, sup in enumerate(sups):
                sims = token_boundary_similarity(q, sup)
                candidates = _top_n_spans(sims.start_sim, sims.end_sim, cfg)
                if not candidates:
                    continue
                s, e, ps, pe = candidates[0]
                votes.setdefault((s, e), []).append((i, ps, pe))
            if not votes:
                continue
            winner, voters = max(
                votes.items(),
                key=lambda item: (
                    len(item[1]),
                    sum(ps + pe for _, ps, pe in item[1]),
                    -item[0][0],
                    -item[0][1],
                ),
            )
            mean_ps = sum(ps for _, ps, _ in voters) / len(voters)
            mean_pe = sum(pe for _, _, pe in voters) / len(voters)
            voter_ids = {i for i, _, _ in voters}
            start_pos, end_pos = winner[0] + 1, winner[1] + 1
            trace = tuple(
                sorted(
                    (
                        TraceEntry(
                            support_id=sup.support_id or str(i),
                            start_dot=float(q.vectors[start_pos] @ sup.boundary_start),
                            end_dot=float(q.vectors[end_pos] @ sup.boundary_end),
                            attention_weight=1.0 if i in voter_ids else 0.0,
                        )
                        for i, sup in enumerate(sups)
                    ),
                    key=lambda e: (-e.attention_weight, -(e.start_dot + e.end_dot), e.support_id),
                )
            )
            winners.append(
                ScoredSpan(
                    start=winner[0],
                    end=winner[1],
                    p_start=mean_ps,
                    p_end=mean_pe,
                    span_score=mean_ps + mean_pe,
                    entity_type=entity_type,
                    trace=trace,
                )
            )
    winners.sort(key=_sort_key)
    return Prediction(
        query_tokens=token_texts(tokens), spans=winners, truncated=q.truncated
    )
