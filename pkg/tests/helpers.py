"""Shared test utilities: end-to-end episode loss and finite-difference checks."""
from __future__ import annotations

import numpy as np
import torch

from spanmatch.encoders import ToyTransformerEncoder
from spanmatch.training import (
    TrainingConfig,
    TrainingEpisode,
    build_labels,
    episode_loss_tensor,
    episode_scores,
)


def episode_pipeline_loss(
    encoder: ToyTransformerEncoder, episode: TrainingEpisode, cfg: TrainingConfig
) -> torch.Tensor:
    """Differentiable loss of the full pipeline: encode -> scores -> loss."""
    q = encoder.encode(episode.query.tokens)
    supports = [encoder.encode_support(ex) for ex in episode.supports]
    scores = episode_scores(q, supports, cfg.temperature, cfg.squash)
    labels = build_labels(episode, scores.length)
    _, total = episode_loss_tensor(scores, labels)
    return total


def check_episode_gradients(
    encoder: ToyTransformerEncoder,
    episode: TrainingEpisode,
    cfg: TrainingConfig,
    rng: np.random.Generator,
    coords_per_tensor: int = 4,
    rel_tol: float = 1e-3,
    abs_floor: float = 1e-7,
    eps: float = 1e-5,
) -> int:
    """Compare autograd against central finite differences on sampled coordinates.

    Returns the number of coordinates checked; raises AssertionError on any
    disagreement beyond rel_tol (with an absolute floor under the FD noise
    level).
    """
    for param in encoder.parameters():
        param.grad = None
    loss = episode_pipeline_loss(encoder, episode, cfg)
    loss.backward()

    checked = 0
    for name, param in encoder.named_parameters():
        if param.grad is None:
            continue
        flat = param.data.reshape(-1)
        grad = param.grad.reshape(-1)
        size = flat.shape[0]
        count = min(coords_per_tensor, size)
        for idx in rng.choice(size, size=count, replace=False):
            idx = int(idx)
            analytic = float(grad[idx])
            with torch.no_grad():
                original = flat[idx].item()
                flat[idx] = original + eps
                up = float(episode_pipeline_loss(encoder, episode, cfg).detach())
                flat[idx] = original - eps
                down = float(episode_pipeline_loss(encoder, episode, cfg).detach())
                flat[idx] = original
            numeric = (up - down) / (2 * eps)
            denom = max(abs(analytic), abs(numeric))
            ok = abs(analytic - numeric) < abs_floor or abs(analytic - numeric) / denom < rel_tol
            assert ok, (
                f"gradient mismatch in {name}[{idx}]: autograd {analytic!r} "
                f"vs finite difference {numeric!r}"
            )
            checked += 1
    return checked
