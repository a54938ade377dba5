"""Torch implementations of the training objective terms.

The kernel, threshold, and mixing weights come from the engine's loss
definition file so both sides share one numeric contract; golden-fixture
parity is checked in float64.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

CLAMP_EPS = 1e-7


def adjacency_penalty(pred: torch.Tensor, kernel: torch.Tensor,
                      threshold: float) -> torch.Tensor:
    """sum(relu(conv3d(pred, kernel) - threshold)) with zero padding.

    pred: (D, H, W) or (B, D, H, W); kernel: (3, 3, 3). Returns a scalar
    (summed over the batch when batched).
    """
    batched = pred.dim() == 4
    x = pred if batched else pred.unsqueeze(0)
    weight = kernel.to(x.dtype).reshape(1, 1, 3, 3, 3)
    resp = F.conv3d(x.unsqueeze(1), weight, padding=1).squeeze(1)
    return F.relu(resp - threshold).sum()


def l1_mean(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return (pred - target).abs().mean()


def adversarial_value(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    dr = d_real.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    df = d_fake.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
    return torch.log(dr).mean() + torch.log(1.0 - df).mean()


def generator_adversarial(d_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator term -log D(fake)."""
    return -torch.log(d_fake.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)).mean()


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Negated discriminator objective, minimized by the D optimizer."""
    return -adversarial_value(d_real, d_fake)


def total_objective(adv, l1, adj, alpha: float, beta: float):
    return alpha * adv + beta * l1 + alpha * adj
