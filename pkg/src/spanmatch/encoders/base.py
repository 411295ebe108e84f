"""Encoder abstraction: per-token context vectors plus a sentence representation.

Row 0 of every encoded sequence is the sequence-start sentinel; it doubles as
the prediction target for queries containing no entity of the scored type.
The sentence representation is the element-wise sum of all rows, sentinel and
marker rows included.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import torch

from ..corpus import (
    MARKER_END,
    MARKER_START,
    SupportExample,
    Token,
    assign_support_id,
    token_texts,
)

log = logging.getLogger(__name__)

SENTINEL = "⟨s⟩"

# Reserved embedding rows; hashed vocabulary starts after them.
SENTINEL_ID = 0
MARKER_START_ID = 1
MARKER_END_ID = 2
NUM_RESERVED = 3

ENCODER_KINDS = ("toy-transformer", "static-hash", "precomputed")


class EncoderError(ValueError):
    """Raised for invalid encoder configuration or malformed encoder input."""


class DimensionMismatchError(EncoderError):
    """Raised when vector dimensions disagree with the configured model dim."""


@dataclass
class EncoderConfig:
    kind: str = "toy-transformer"
    dim: int = 64
    layers: int = 2
    heads: int = 4
    vocab_hash_buckets: int = 8192
    seed: int = 0
    context_window: int = 1           # static-hash only
    max_sequence_length: int = 384

    def __post_init__(self) -> None:
        if self.kind not in ENCODER_KINDS:
            raise EncoderError(f"unknown encoder kind {self.kind!r}")
        for name in ("dim", "layers", "heads", "vocab_hash_buckets", "max_sequence_length"):
            if getattr(self, name) <= 0:
                raise EncoderError(f"{name} must be positive")
        if self.dim % self.heads != 0:
            raise EncoderError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.context_window < 0:
            raise EncoderError("context_window must be >= 0")
        if self.seed < 0:
            raise EncoderError("seed must be unsigned")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "layers": self.layers,
            "heads": self.heads,
            "vocab_hash_buckets": self.vocab_hash_buckets,
            "seed": self.seed,
            "context_window": self.context_window,
            "max_sequence_length": self.max_sequence_length,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


def hash_token(text: str, buckets: int) -> int:
    """Stable embedding id for a surface form; reserved rows are never hashed."""
    if text == SENTINEL:
        return SENTINEL_ID
    if text == MARKER_START:
        return MARKER_START_ID
    if text == MARKER_END:
        return MARKER_END_ID
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return NUM_RESERVED + int.from_bytes(digest, "little") % buckets


@dataclass
class EncodedSequence:
    """(len+1) x d context vectors with the sentinel in row 0."""

    vectors: torch.Tensor
    sentence_rep: torch.Tensor
    truncated: bool = False

    @classmethod
    def from_vectors(cls, vectors: torch.Tensor, truncated: bool = False) -> "EncodedSequence":
        if vectors.ndim != 2:
            raise EncoderError(f"expected a 2-D matrix, got shape {tuple(vectors.shape)}")
        if not torch.isfinite(vectors.detach()).all():
            raise EncoderError("encoded vectors contain non-finite entries")
        return cls(vectors=vectors, sentence_rep=vectors.sum(dim=0), truncated=truncated)

    @property
    def length(self) -> int:
        """Number of real token positions (sentinel excluded)."""
        return self.vectors.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class SupportEncoding:
    """Encoded support example plus its entity boundary vectors.

    The boundary vectors are the contextual rows of the opening and closing
    marker tokens and act as start/end prototypes for the entity type.
    """

    base: EncodedSequence
    boundary_start: torch.Tensor
    boundary_end: torch.Tensor
    example: SupportExample | None = None
    support_id: str = ""


class Encoder:
    """Common behaviour for all encoder kinds."""

    def __init__(self, config: EncoderConfig) -> None:
        self.config = config

    def encode(self, tokens: Sequence[Token | str], key: str | None = None) -> EncodedSequence:
        raise NotImplementedError

    def encode_support(self, ex: SupportExample, support_id: str = "") -> SupportEncoding:
        """Encode a marked sentence and expose the marker rows as boundary vectors."""
        return self.as_support_encoding(self.encode(ex.tokens), ex, support_id)

    @staticmethod
    def as_support_encoding(
        enc: EncodedSequence, ex: SupportExample, support_id: str = ""
    ) -> SupportEncoding:
        """Attach boundary views of the marker rows to an encoded support."""
        if enc.truncated and ex.end_marker_pos + 1 >= enc.vectors.shape[0]:
            raise EncoderError(
                "support example truncated past its closing marker; "
                "shorten the example or raise max_sequence_length"
            )
        return SupportEncoding(
            base=enc,
            boundary_start=enc.vectors[ex.start_marker_pos + 1],
            boundary_end=enc.vectors[ex.end_marker_pos + 1],
            example=ex,
            support_id=support_id,
        )

    def encode_batch(
        self, token_lists: Sequence[Sequence[Token | str]]
    ) -> list[EncodedSequence]:
        """Encode several sentences; subclasses may override with a batched pass."""
        return [self.encode(tokens) for tokens in token_lists]

    def _prepare_texts(self, tokens: Sequence[Token | str]) -> tuple[list[str], bool]:
        """Prepend the sentinel; truncate over-length input from the right."""
        texts = token_texts(tokens)
        if not texts:
            raise EncoderError("cannot encode an empty token sequence")
        truncated = False
        limit = self.config.max_sequence_length
        if len(texts) > limit:
            log.warning("truncating %d-token input to max_sequence_length=%d", len(texts), limit)
            texts = texts[:limit]
            truncated = True
        return [SENTINEL] + texts, truncated


def encode_support_set(
    support_set, encoder: Encoder
) -> dict[str, list[SupportEncoding]]:
    """Encode every support example once, grouped by entity type.

    Support ids are content-derived via :func:`assign_support_id`, so offline
    predictions and the serving layer trace the same example to the same id.
    """
    encoded: dict[str, list[SupportEncoding]] = {}
    taken: set[str] = set()
    with torch.no_grad():
        for entity_type, examples in support_set:
            encodings = encoder.encode_batch([ex.tokens for ex in examples])
            group = []
            for ex, enc in zip(examples, encodings):
                support_id = assign_support_id(ex, taken)
                taken.add(support_id)
                group.append(encoder.as_support_encoding(enc, ex, support_id))
            encoded[entity_type] = group
    return encoded
