from __future__ import annotations

from pathlib import Path

from .base import (
    ENCODER_KINDS,
    DimensionMismatchError,
    EncodedSequence,
    Encoder,
    EncoderConfig,
    EncoderError,
    SENTINEL,
    SupportEncoding,
    encode_support_set,
    hash_token,
)
from .precomputed import (
    PrecomputedEncoder,
    UnknownSentenceError,
    load_precomputed,
    save_precomputed,
)
from .static_hash import StaticHashEncoder
from .toy_transformer import ToyTransformerEncoder


def create_encoder(config: EncoderConfig, vectors_path: str | Path | None = None) -> Encoder:
    """Instantiate the encoder named by ``config.kind``."""
    if config.kind == "toy-transformer":
        return ToyTransformerEncoder(config)
    if config.kind == "static-hash":
        return StaticHashEncoder(config)
    if config.kind == "precomputed":
        if vectors_path is None:
            raise EncoderError("precomputed encoder requires a vectors file path")
        return load_precomputed(vectors_path, config)
    raise EncoderError(f"unknown encoder kind {config.kind!r}")


__all__ = [
    "ENCODER_KINDS",
    "DimensionMismatchError",
    "EncodedSequence",
    "Encoder",
    "EncoderConfig",
    "EncoderError",
    "PrecomputedEncoder",
    "SENTINEL",
    "StaticHashEncoder",
    "SupportEncoding",
    "ToyTransformerEncoder",
    "UnknownSentenceError",
    "create_encoder",
    "encode_support_set",
    "hash_token",
    "load_precomputed",
    "save_precomputed",
]
