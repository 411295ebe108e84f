"""Deterministic non-trainable encoder for tests and baselines.

Each token's vector is a seeded pseudo-random base vector for its hash bucket
plus geometrically decayed base vectors of neighbours inside a fixed context
window.  With window 0 a token's vector depends only on its own identity.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from ..corpus import Token
from .base import EncodedSequence, Encoder, EncoderConfig, EncoderError, hash_token

DECAY = 0.5


class StaticHashEncoder(Encoder):
    def __init__(self, config: EncoderConfig) -> None:
        if config.kind != "static-hash":
            raise EncoderError(f"config kind {config.kind!r} is not static-hash")
        super().__init__(config)
        self._base_cache: dict[int, np.ndarray] = {}

    def _base(self, bucket: int) -> np.ndarray:
        vec = self._base_cache.get(bucket)
        if vec is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, bucket]))
            vec = rng.standard_normal(self.config.dim) / np.sqrt(self.config.dim)
            self._base_cache[bucket] = vec
        return vec

    def encode(self, tokens: Sequence[Token | str], key: str | None = None) -> EncodedSequence:
        texts, truncated = self._prepare_texts(tokens)
        buckets = [hash_token(t, self.config.vocab_hash_buckets) for t in texts]
        bases = [self._base(b) for b in buckets]
        window = self.config.context_window
        rows = np.empty((len(texts), self.config.dim))
        for i in range(len(texts)):
            row = bases[i].copy()
            for offset in range(1, window + 1):
                if i - offset >= 0:
                    row += DECAY**offset * bases[i - offset]
                if i + offset < len(texts):
                    row += DECAY**offset * bases[i + offset]
            rows[i] = row
        vectors = torch.from_numpy(rows).to(torch.float64)
        return EncodedSequence.from_vectors(vectors, truncated=truncated)
