"""Similarity kernel: token-boundary dot products and sentence-level soft attention."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import torch

from .encoders import DimensionMismatchError, EncodedSequence, SupportEncoding

log = logging.getLogger(__name__)

_ZERO_NORM_EPS = 1e-300


@dataclass
class PairSimilarity:
    """Per-query-position similarity to one support's boundary vectors.

    Length is query length + 1: index 0 is the sentinel position.
    """

    start_sim: torch.Tensor
    end_sim: torch.Tensor


@dataclass
class AttentionWeights:
    weights: torch.Tensor
    temperature: float

    def tolist(self) -> list[float]:
        return [float(w) for w in self.weights]


def token_boundary_similarity(q: EncodedSequence, s: SupportEncoding) -> PairSimilarity:
    """Dot product of every query row with the support's start/end boundary vectors."""
    if q.dim != s.boundary_start.shape[0]:
        raise DimensionMismatchError(
            f"query dim {q.dim} != support dim {s.boundary_start.shape[0]}"
        )
    return PairSimilarity(
        start_sim=q.vectors @ s.boundary_start,
        end_sim=q.vectors @ s.boundary_end,
    )


def safe_cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity, defined as 0 when either vector has zero norm.

    A zero-norm vector would make the quotient NaN and poison the softmax;
    untrained or padded representations must degrade to a neutral weight.
    """
    denom = a.norm() * b.norm()
    ok = denom > _ZERO_NORM_EPS
    if not bool(ok):
        log.debug("zero-norm vector in cosine; returning 0")
    safe = torch.where(ok, denom, torch.ones_like(denom))
    return torch.where(ok, (a @ b) / safe, torch.zeros_like(denom))


def sentence_attention(
    q_rep: torch.Tensor,
    s_reps: Sequence[torch.Tensor],
    temperature: float,
) -> AttentionWeights:
    """Softmax over ``temperature * cosine(q_rep, s_rep_j)`` across supports.

    torch's softmax subtracts the running max, so the weights are stable for
    any temperature.
    """
    if len(s_reps) == 0:
        raise ValueError("sentence_attention requires at least one support representation")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    cosines = torch.stack([safe_cosine(q_rep, rep) for rep in s_reps])
    weights = torch.softmax(temperature * cosines, dim=0)
    return AttentionWeights(weights=weights, temperature=temperature)
