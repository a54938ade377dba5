"""Toy-scale generator and discriminator.

The generator encodes a (3, planes, 64, 32) half-input down to plan
resolution and emits seed probabilities (planes, rows, half_cols); the
discriminator consumes the input with the (real or generated) plan resized
and stacked as a fourth channel. Depths are intentionally small for CPU
budgets.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class ResBlock3d(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.c1 = nn.Conv3d(channels, channels, 3, padding=1)
        self.c2 = nn.Conv3d(channels, channels, 3, padding=1)

    def forward(self, x):
        h = F.relu(self.c1(x))
        return F.relu(x + self.c2(h))


class PlanGenerator(nn.Module):
    def __init__(self, planes: int = 14, rows: int = 10, half_cols: int = 6,
                 width: int = 24, base_rate: float = 0.06):
        super().__init__()
        self.out_shape = (planes, rows, half_cols)
        self.stem = nn.Conv3d(3, width, 3, padding=1)
        self.down1 = nn.Conv3d(width, 2 * width, (1, 4, 4), stride=(1, 2, 2),
                               padding=(0, 1, 1))
        self.down2 = nn.Conv3d(2 * width, 2 * width, (1, 4, 4), stride=(1, 2, 2),
                               padding=(0, 1, 1))
        self.res = nn.Sequential(ResBlock3d(2 * width), ResBlock3d(2 * width))
        self.head1 = nn.Conv3d(2 * width, width, 1)
        self.head2 = nn.Conv3d(width, 1, 1)
        # start the sigmoid output near the seed base rate so sparse targets
        # pull positives up instead of collapsing everything toward zero
        with torch.no_grad():
            self.head2.bias.fill_(math.log(base_rate / (1.0 - base_rate)))

    def forward(self, x):
        h = F.relu(self.stem(x))
        h = F.relu(self.down1(h))
        h = F.relu(self.down2(h))
        h = self.res(h)
        h = F.interpolate(h, size=self.out_shape, mode="trilinear",
                          align_corners=False)
        h = F.relu(self.head1(h))
        return torch.sigmoid(self.head2(h)).squeeze(1)  # (B, planes, rows, cols)


class PlanDiscriminator(nn.Module):
    def __init__(self, planes: int = 14, width: int = 16):
        super().__init__()
        self.c1 = nn.Conv3d(4, width, (3, 4, 4), stride=(1, 2, 2), padding=1)
        self.c2 = nn.Conv3d(width, 2 * width, (3, 4, 4), stride=(2, 2, 2),
                            padding=1)
        self.c3 = nn.Conv3d(2 * width, 2 * width, 3, padding=1)
        self.fc = nn.Linear(2 * width, 1)

    def forward(self, x, plan):
        # resize-and-concatenate block: plan (B, planes, rows, cols) up to the
        # input raster as one extra channel
        resized = F.interpolate(plan.unsqueeze(1), size=x.shape[2:],
                                mode="trilinear", align_corners=False)
        h = torch.cat([x, resized], dim=1)
        h = F.leaky_relu(self.c1(h), 0.2)
        h = F.leaky_relu(self.c2(h), 0.2)
        h = F.leaky_relu(self.c3(h), 0.2)
        h = h.mean(dim=(2, 3, 4))
        return torch.sigmoid(self.fc(h)).squeeze(1)  # (B,)
