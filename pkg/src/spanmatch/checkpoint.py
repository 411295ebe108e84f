"""Checkpoint container: encoder config + parameter tensors + optimizer state.

Layout: an 8-byte magic, a little-endian uint64 header length, a JSON header
(sorted keys), then the raw little-endian float64 array payloads in header
order.  Writing the same state twice produces byte-identical files, which the
determinism checks rely on.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .encoders import (
    Encoder,
    EncoderConfig,
    EncoderError,
    StaticHashEncoder,
    ToyTransformerEncoder,
)

MAGIC = b"SPNMCKP1"


class CheckpointError(RuntimeError):
    pass


def _tensor_payloads(state: dict[str, torch.Tensor]) -> tuple[list[dict], list[bytes]]:
    meta: list[dict] = []
    blobs: list[bytes] = []
    for name, tensor in state.items():
        array = tensor.detach().cpu().numpy().astype("<f8")
        meta.append({"name": name, "shape": list(array.shape)})
        blobs.append(array.tobytes())
    return meta, blobs


def _flatten_optimizer(state: dict | None) -> tuple[dict | None, list[dict], list[bytes]]:
    """Split an AdamW state dict into JSON-safe structure plus array payloads."""
    if state is None:
        return None, [], []
    meta: list[dict] = []
    blobs: list[bytes] = []
    plain: dict[str, Any] = {"param_groups": state["param_groups"], "state": {}}
    for pid, slots in state.get("state", {}).items():
        entry: dict[str, Any] = {}
        for key, value in slots.items():
            if isinstance(value, torch.Tensor):
                if value.ndim == 0:
                    entry[key] = {"scalar": float(value)}
                else:
                    ref = f"opt/{pid}/{key}"
                    array = value.detach().cpu().numpy().astype("<f8")
                    meta.append({"name": ref, "shape": list(array.shape)})
                    blobs.append(array.tobytes())
                    entry[key] = {"array": ref}
            else:
                entry[key] = {"scalar": value}
        plain["state"][str(pid)] = entry
    return plain, meta, blobs


def save_checkpoint(
    path: str | Path,
    encoder: Encoder,
    training_config: dict | None = None,
    optimizer_state: dict | None = None,
    seed: int | None = None,
    extra: dict | None = None,
) -> None:
    if isinstance(encoder, ToyTransformerEncoder):
        param_meta, param_blobs = _tensor_payloads(encoder.state_dict())
    elif isinstance(encoder, StaticHashEncoder):
        param_meta, param_blobs = [], []
    else:
        raise CheckpointError(
            f"cannot checkpoint encoder kind {encoder.config.kind!r}; "
            "precomputed vectors live in their own file"
        )
    opt_plain, opt_meta, opt_blobs = _flatten_optimizer(optimizer_state)
    header = {
        "encoder_config": encoder.config.to_dict(),
        "seed": encoder.config.seed if seed is None else seed,
        "training_config": training_config,
        "optimizer": opt_plain,
        "arrays": param_meta + opt_meta,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with Path(path).open("wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<Q", len(header_bytes)))
        handle.write(header_bytes)
        for blob in param_blobs + opt_blobs:
            handle.write(blob)


def load_checkpoint(path: str | Path) -> tuple[Encoder, dict]:
    """Rebuild the encoder from a checkpoint; returns (encoder, header metadata)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a spanmatch checkpoint")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_start = len(MAGIC) + 8
    try:
        header = json.loads(raw[header_start : header_start + header_len])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header") from exc

    arrays: dict[str, torch.Tensor] = {}
    offset = header_start + header_len
    for meta in header["arrays"]:
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated array payload for {meta['name']!r}")
        array = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        arrays[meta["name"]] = torch.from_numpy(array)
        offset += nbytes

    config = EncoderConfig.from_dict(header["encoder_config"])
    if config.kind == "toy-transformer":
        encoder: Encoder = ToyTransformerEncoder(config)
        state = {
            meta["name"]: arrays[meta["name"]]
            for meta in header["arrays"]
            if not meta["name"].startswith("opt/")
        }
        try:
            encoder.load_state_dict(state)
        except RuntimeError as exc:
            raise CheckpointError(f"{path}: parameter mismatch: {exc}") from exc
    elif config.kind == "static-hash":
        encoder = StaticHashEncoder(config)
    else:
        raise CheckpointError(f"{path}: cannot restore encoder kind {config.kind!r}")

    metadata = {
        "seed": header.get("seed"),
        "training_config": header.get("training_config"),
        "optimizer": header.get("optimizer"),
        "optimizer_arrays": {k: v for k, v in arrays.items() if k.startswith("opt/")},
        "extra": header.get("extra", {}),
    }
    return encoder, metadata
