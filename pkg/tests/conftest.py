from __future__ import annotations

import numpy as np
import pytest
import torch

from spanmatch.corpus import (
    EntitySpan,
    LabeledSentence,
    Sentence,
    SupportSet,
    make_support_example,
    make_tokens,
)
from spanmatch.encoders import (
    EncodedSequence,
    EncoderConfig,
    StaticHashEncoder,
    SupportEncoding,
    ToyTransformerEncoder,
)


def labeled(texts: list[str], spans: list[tuple[int, int, str]], source_id: str = "t") -> LabeledSentence:
    return LabeledSentence(
        sentence=Sentence(make_tokens(texts), source_id=source_id),
        spans=tuple(EntitySpan(s, e, t) for s, e, t in spans),
    )


def support(texts: list[str], start: int, end: int, entity_type: str):
    return make_support_example(texts, start, end, entity_type)


def encoded_from(rows: list[list[float]]) -> EncodedSequence:
    return EncodedSequence.from_vectors(torch.tensor(rows, dtype=torch.float64))


def support_encoding_from(
    base_rows: list[list[float]],
    boundary_start: list[float],
    boundary_end: list[float],
    entity_type: str = "X",
) -> SupportEncoding:
    ex = support(["a"], 0, 0, entity_type)
    return SupportEncoding(
        base=encoded_from(base_rows),
        boundary_start=torch.tensor(boundary_start, dtype=torch.float64),
        boundary_end=torch.tensor(boundary_end, dtype=torch.float64),
        example=ex,
    )


@pytest.fixture
def tiny_config() -> EncoderConfig:
    return EncoderConfig(dim=8, layers=1, heads=2, vocab_hash_buckets=64, seed=7)


@pytest.fixture
def tiny_encoder(tiny_config) -> ToyTransformerEncoder:
    return ToyTransformerEncoder(tiny_config)


@pytest.fixture
def hash_encoder() -> StaticHashEncoder:
    return StaticHashEncoder(
        EncoderConfig(kind="static-hash", dim=8, heads=2, vocab_hash_buckets=64, seed=7)
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
