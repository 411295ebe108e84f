"""Encoder backed by precomputed vectors, e.g. exported from a large pretrained model.

File layout (JSON, float32 values, dimension recorded in the header):

    {
      "format": "precomputed-vectors",
      "dim": 64,
      "entries": {
        "<sentence id>": {"tokens": ["..."], "vectors": [[...], ...]},
        ...
      }
    }

Each matrix has ``len(tokens) + 1`` rows: row 0 is the sentinel.  The sentence
representation is always recomputed from the rows, never stored.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..corpus import Token, token_texts
from .base import (
    DimensionMismatchError,
    EncodedSequence,
    Encoder,
    EncoderConfig,
    EncoderError,
)

FORMAT_NAME = "precomputed-vectors"

# Unit separator: joins token surfaces into an unambiguous content key.
_KEY_SEP = "\x1f"


class UnknownSentenceError(EncoderError):
    """Raised when no precomputed vectors exist for the requested sentence."""


def content_key(texts: Sequence[str]) -> str:
    return _KEY_SEP.join(texts)


class PrecomputedEncoder(Encoder):
    def __init__(
        self,
        config: EncoderConfig,
        matrices: dict[str, torch.Tensor],
        token_keys: dict[str, str] | None = None,
    ) -> None:
        if config.kind != "precomputed":
            raise EncoderError(f"config kind {config.kind!r} is not precomputed")
        super().__init__(config)
        self._matrices = matrices
        self._token_keys = token_keys or {}

    def encode(self, tokens: Sequence[Token | str], key: str | None = None) -> EncodedSequence:
        texts = token_texts(tokens)
        lookup = key if key is not None else self._token_keys.get(content_key(texts))
        if lookup is None or lookup not in self._matrices:
            raise UnknownSentenceError(
                f"no precomputed vectors for sentence {key or ' '.join(texts)!r}"
            )
        matrix = self._matrices[lookup]
        if matrix.shape[0] != len(texts) + 1:
            raise EncoderError(
                f"stored matrix for {lookup!r} has {matrix.shape[0]} rows, "
                f"expected {len(texts) + 1} (sentinel + tokens)"
            )
        return EncodedSequence.from_vectors(matrix)


def save_precomputed(
    path: str | Path, entries: dict[str, tuple[Sequence[str], np.ndarray]], dim: int
) -> None:
    """Write ``{sentence id: (tokens, matrix)}`` in the precomputed-vector format."""
    payload: dict = {"format": FORMAT_NAME, "dim": dim, "entries": {}}
    for sentence_id, (texts, matrix) in entries.items():
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] != dim:
            raise EncoderError(f"matrix for {sentence_id!r} must be (rows, {dim})")
        if matrix.shape[0] != len(texts) + 1:
            raise EncoderError(
                f"matrix for {sentence_id!r} must have len(tokens)+1 rows"
            )
        payload["entries"][sentence_id] = {
            "tokens": list(texts),
            "vectors": [[float(v) for v in row] for row in matrix],
        }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")


def load_precomputed(path: str | Path, config: EncoderConfig | None = None) -> PrecomputedEncoder:
    """Load a precomputed-vector file; a config, when given, must agree on dim."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("format") != FORMAT_NAME:
        raise EncoderError(f"{path}: not a {FORMAT_NAME} file")
    dim = int(data["dim"])
    if config is None:
        config = EncoderConfig(kind="precomputed", dim=dim, heads=1)
    if config.dim != dim:
        raise DimensionMismatchError(
            f"{path}: stores dim {dim}, config expects dim {config.dim}"
        )
    matrices: dict[str, torch.Tensor] = {}
    token_keys: dict[str, str] = {}
    for sentence_id, entry in data["entries"].items():
        matrix = np.asarray(entry["vectors"], dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] != dim:
            raise DimensionMismatchError(
                f"{path}: entry {sentence_id!r} has shape {matrix.shape}, expected (*, {dim})"
            )
        matrices[sentence_id] = torch.from_numpy(matrix).to(torch.float64)
        if entry.get("tokens"):
            token_keys[content_key(entry["tokens"])] = sentence_id
    return PrecomputedEncoder(config, matrices, token_keys)
