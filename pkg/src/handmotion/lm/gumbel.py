"""Gumbel-Softmax relaxation with a deterministic zero-noise mode."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from ..errors import ValidationError

_EPS = 1e-20


def sample_gumbel_noise(
    shape, generator: torch.Generator | None = None, dtype=torch.float32
) -> torch.Tensor:
    u = torch.rand(shape, generator=generator, dtype=dtype)
    return -torch.log(-torch.log(u + _EPS) + _EPS)


def gumbel_softmax(
    logits: torch.Tensor,
    tau: float,
    noise: torch.Tensor | None = None,
    hard: bool = False,
) -> torch.Tensor:
    """softmax((logits + noise) / tau) over the last dimension.

    ``noise=None`` runs the deterministic zero-noise mode. ``hard=True``
    returns a straight-through one-hot: the forward value is the argmax
    one-hot while gradients follow the soft sample.
    """
    if tau <= 0:
        raise ValidationError("gumbel temperature must be positive")
    if noise is not None:
        if noise.shape != logits.shape:
            raise ValidationError("noise must match the logits shape")
        logits = logits + noise
    soft = F.softmax(logits / tau, dim=-1)
    if not hard:
        return soft
    index = soft.argmax(dim=-1, keepdim=True)
    one_hot = torch.zeros_like(soft).scatter_(-1, index, 1.0)
    return one_hot + soft - soft.detach()
