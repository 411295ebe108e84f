"""Episodic fine-tuning of the encoder.

Each episode pairs one query with K support examples of a single entity type.
Per-position start/end scores are attention-weighted sums of boundary dot
products, squashed into (0, 1), and trained with binary cross-entropy against
multi-hot boundary labels.  Negative episodes (support type absent from the
query) put their label mass on the sentinel position.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import torch

from .corpus import EntitySpan, LabeledSentence, Sentence, SupportExample, SupportSet
from .encoders import EncodedSequence, Encoder, SupportEncoding, ToyTransformerEncoder
from .similarity import sentence_attention, token_boundary_similarity

log = logging.getLogger(__name__)

LOSS_EPS = 1e-7

SQUASH_MODES = ("sigmoid", "softmax")


class TrainingError(RuntimeError):
    pass


class TrainingDivergedError(TrainingError):
    """Loss became non-finite; training aborts rather than produce garbage."""


@dataclass
class TrainingConfig:
    k: int = 5
    temperature: float = 1.0
    learning_rate: float = 5e-5
    adam_epsilon: float = 1e-8
    weight_decay: float = 0.0
    max_sequence_length: int = 384
    neg_pos_ratio: float = 1.0
    batch_size: int = 8
    epochs: int = 5
    seed: int = 0
    squash: str = "sigmoid"

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.learning_rate < 0 or self.adam_epsilon <= 0 or self.weight_decay < 0:
            raise ValueError("invalid optimizer hyperparameters")
        if self.max_sequence_length < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("invalid size hyperparameters")
        if self.neg_pos_ratio < 0:
            raise ValueError("neg_pos_ratio must be >= 0")
        if self.squash not in SQUASH_MODES:
            raise ValueError(f"squash must be one of {SQUASH_MODES}")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "temperature": self.temperature,
            "learning_rate": self.learning_rate,
            "adam_epsilon": self.adam_epsilon,
            "weight_decay": self.weight_decay,
            "max_sequence_length": self.max_sequence_length,
            "neg_pos_ratio": self.neg_pos_ratio,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "squash": self.squash,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        return cls(**data)


@dataclass(frozen=True)
class TrainingEpisode:
    query: Sentence
    gold_spans: tuple[EntitySpan, ...]
    supports: tuple[SupportExample, ...]
    polarity: str  # "positive" | "negative"
    entity_type: str

    def __post_init__(self) -> None:
        if self.polarity not in ("positive", "negative"):
            raise ValueError(f"bad polarity {self.polarity!r}")
        if self.polarity == "positive":
            if not self.gold_spans or any(
                s.entity_type != self.entity_type for s in self.gold_spans
            ):
                raise ValueError("positive episode needs gold spans of its entity type")
        elif self.gold_spans:
            raise ValueError("negative episode must carry no gold spans")
        if any(s.entity_type != self.entity_type for s in self.supports):
            raise ValueError("episode supports must share the episode entity type")


@dataclass
class TrainingLabels:
    """Multi-hot start/end targets over sentinel + query positions."""

    y_start: torch.Tensor
    y_end: torch.Tensor


@dataclass
class BoundaryScores:
    """Per-position start/end scores for one entity type (sentinel at index 0)."""

    p_start: torch.Tensor
    p_end: torch.Tensor
    entity_type: str = ""

    @property
    def length(self) -> int:
        return self.p_start.shape[0]


@dataclass
class LossBreakdown:
    l_start: float
    l_end: float
    total: float


def attention_weighted_scores(
    q: EncodedSequence, supports: Sequence[SupportEncoding], temperature: float
) -> BoundaryScores:
    """Raw per-position scores: soft-attention weighted sum of boundary dots."""
    if not supports:
        raise ValueError("need at least one support encoding")
    weights = sentence_attention(
        q.sentence_rep, [s.base.sentence_rep for s in supports], temperature
    ).weights
    start = torch.zeros_like(q.vectors[:, 0])
    end = torch.zeros_like(start)
    for w, sup in zip(weights, supports):
        sims = token_boundary_similarity(q, sup)
        start = start + w * sims.start_sim
        end = end + w * sims.end_sim
    entity_type = supports[0].example.entity_type if supports[0].example else ""
    return BoundaryScores(p_start=start, p_end=end, entity_type=entity_type)


def squash_scores(raw: BoundaryScores, mode: str = "sigmoid") -> BoundaryScores:
    """Map raw scores into (0, 1).

    ``sigmoid`` squashes each position independently; ``softmax`` normalizes
    across positions (extractive-QA style).  Both are monotone per position
    ranking, so inference on raw scores agrees with the trained objective.
    """
    if mode == "sigmoid":
        squashed = lambda t: torch.sigmoid(t)
    elif mode == "softmax":
        squashed = lambda t: torch.softmax(t, dim=0)
    else:
        raise ValueError(f"unknown squash mode {mode!r}")
    return BoundaryScores(
        p_start=squashed(raw.p_start), p_end=squashed(raw.p_end), entity_type=raw.entity_type
    )


def episode_scores(
    q: EncodedSequence,
    supports: Sequence[SupportEncoding],
    temperature: float,
    squash: str = "sigmoid",
) -> BoundaryScores:
    """Training-time scores: attention-weighted boundary dots squashed into (0, 1)."""
    return squash_scores(attention_weighted_scores(q, supports, temperature), squash)


def build_labels(episode: TrainingEpisode, encoded_length: int) -> TrainingLabels:
    """Boundary targets aligned with an encoded query of ``encoded_length`` rows.

    Positive episodes mark every gold span's boundaries (multi-hot when a type
    occurs several times); negative episodes mark only the sentinel.
    """
    y_start = torch.zeros(encoded_length, dtype=torch.float64)
    y_end = torch.zeros_like(y_start)
    if episode.polarity == "negative":
        y_start[0] = 1.0
        y_end[0] = 1.0
        return TrainingLabels(y_start, y_end)
    for span in episode.gold_spans:
        # +1: row 0 is the sentinel.  Spans truncated away contribute no target.
        if span.end + 1 < encoded_length:
            y_start[span.start + 1] = 1.0
            y_end[span.end + 1] = 1.0
    return TrainingLabels(y_start, y_end)


def episode_loss(scores: BoundaryScores, labels: TrainingLabels) -> LossBreakdown:
    """Binary cross-entropy summed over positions, start and end averaged."""
    breakdown, _ = episode_loss_tensor(scores, labels)
    return breakdown


def episode_loss_tensor(
    scores: BoundaryScores, labels: TrainingLabels
) -> tuple[LossBreakdown, torch.Tensor]:
    """Like :func:`episode_loss` but also returns the differentiable total."""
    if scores.p_start.shape != labels.y_start.shape:
        raise ValueError(
            f"scores length {tuple(scores.p_start.shape)} does not match "
            f"labels length {tuple(labels.y_start.shape)}"
        )

    def bce(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS)
        return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum()

    l_start = bce(scores.p_start, labels.y_start)
    l_end = bce(scores.p_end, labels.y_end)
    total = (l_start + l_end) / 2.0
    breakdown = LossBreakdown(
        float(l_start.detach()), float(l_end.detach()), float(total.detach())
    )
    return breakdown, total


def build_episodes(
    corpus: Sequence[LabeledSentence],
    support_pool: SupportSet,
    cfg: TrainingConfig,
    rng: np.random.Generator,
) -> list[TrainingEpisode]:
    """One positive episode per (query, gold entity type) plus sampled negatives.

    Supports are drawn without replacement, falling back to replacement when a
    type has fewer than K examples.  Negative supports come from a type absent
    from the query; queries containing every pooled type yield no negatives.
    """
    episodes: list[TrainingEpisode] = []
    pool_types = support_pool.entity_types
    negatives_per_positive = math.ceil(cfg.neg_pos_ratio) if cfg.neg_pos_ratio > 0 else 0
    for ls in corpus:
        present = ls.entity_types
        absent_types = [t for t in pool_types if t not in present]
        for entity_type in sorted(present):
            if support_pool.count(entity_type) == 0:
                log.warning(
                    "skipping %r episodes: no support examples for this type", entity_type
                )
                continue
            gold = tuple(s for s in ls.spans if s.entity_type == entity_type)
            episodes.append(
                TrainingEpisode(
                    query=ls.sentence,
                    gold_spans=gold,
                    supports=_sample_supports(support_pool, entity_type, cfg.k, rng),
                    polarity="positive",
                    entity_type=entity_type,
                )
            )
            for _ in range(negatives_per_positive):
                if not absent_types:
                    break
                neg_type = absent_types[rng.integers(len(absent_types))]
                episodes.append(
                    TrainingEpisode(
                        query=ls.sentence,
                        gold_spans=(),
                        supports=_sample_supports(support_pool, neg_type, cfg.k, rng),
                        polarity="negative",
                        entity_type=neg_type,
                    )
                )
    return episodes


def _sample_supports(
    pool: SupportSet, entity_type: str, k: int, rng: np.random.Generator
) -> tuple[SupportExample, ...]:
    group = pool.entries[entity_type]
    replace = len(group) < k
    idx = rng.choice(len(group), size=k, replace=replace)
    return tuple(group[int(i)] for i in idx)


@dataclass
class TrainingResult:
    loss_curve: list[float] = field(default_factory=list)
    optimizer_state: dict | None = None


def train(
    corpus: Sequence[LabeledSentence],
    support_pool: SupportSet,
    encoder: Encoder,
    cfg: TrainingConfig,
) -> TrainingResult:
    """Fine-tune the encoder in place; returns the per-epoch mean loss curve.

    Deterministic for a fixed config seed.  Episode construction is resampled
    every epoch from an epoch-derived stream so negatives vary.
    """
    if not isinstance(encoder, ToyTransformerEncoder):
        raise TrainingError("only the toy-transformer encoder is trainable")
    optimizer = torch.optim.AdamW(
        encoder.parameters(),
        lr=cfg.learning_rate,
        eps=cfg.adam_epsilon,
        weight_decay=cfg.weight_decay,
    )
    result = TrainingResult()
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        episodes = build_episodes(corpus, support_pool, cfg, rng)
        if not episodes:
            raise TrainingError("corpus produced no training episodes")
        order = rng.permutation(len(episodes))
        epoch_loss = 0.0
        for batch_start in range(0, len(order), cfg.batch_size):
            batch = [episodes[int(i)] for i in order[batch_start : batch_start + cfg.batch_size]]
            optimizer.zero_grad()
            # one padded forward for every sequence in the minibatch
            sequences: list = []
            for episode in batch:
                sequences.append(episode.query.tokens)
                sequences.extend(ex.tokens for ex in episode.supports)
            encoded = encoder.encode_batch(sequences)
            losses = []
            cursor = 0
            for episode in batch:
                q = encoded[cursor]
                supports = [
                    encoder.as_support_encoding(encoded[cursor + 1 + j], ex)
                    for j, ex in enumerate(episode.supports)
                ]
                cursor += 1 + len(episode.supports)
                scores = episode_scores(q, supports, cfg.temperature, cfg.squash)
                labels = build_labels(episode, scores.length)
                _, loss = episode_loss_tensor(scores, labels)
                losses.append(loss)
            batch_loss = torch.stack(losses).mean()
            if not torch.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting at episode "
                    f"{batch_start}: {float(batch_loss.detach())!r}"
                )
            batch_loss.backward()
            optimizer.step()
            epoch_loss += float(batch_loss.detach()) * len(batch)
        mean_loss = epoch_loss / len(order)
        result.loss_curve.append(mean_loss)
        log.info("epoch %d: mean loss %.6f over %d episodes", epoch, mean_loss, len(order))
    result.optimizer_state = optimizer.state_dict()
    return result
