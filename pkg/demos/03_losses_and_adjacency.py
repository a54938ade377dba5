"""Walkthrough: training losses, the adjacent-seed penalty, and plan
comparison metrics.

The adjacency penalty convolves the probability tensor with a 3x3x3
face-neighbor kernel (center 7, faces 1) and hinges above a threshold of 5:
a lone confident seed scores 2, face-adjacent pairs score much more, so the
gradient pushes probability mass apart.
"""

import numpy as np

from seedplan import (
    LossWeights,
    adj_seed_loss,
    adversarial_loss,
    compare_plans,
    count_adjacent_pairs,
    l1_loss,
    total_objective,
)
from seedplan.losses import AdjKernel, generator_adversarial_loss

kernel = AdjKernel()
print("kernel mid-slice:\n", kernel.values[1])

shape = (10, 13, 14)
lone = np.zeros(shape)
lone[4, 6, 7] = 1.0
print(f"\nisolated seed: adjacency value {adj_seed_loss(lone)[0]}")

pair = lone.copy()
pair[4, 6, 8] = 1.0
value, grad = adj_seed_loss(pair)
print(f"axial pair: value {value}, gradient peak {grad.max():.0f} "
      "at the seed voxels")

rng = np.random.default_rng(0)
pred = rng.random(shape)
target = (rng.random(shape) < 0.06).astype(float)
l1_value, l1_grad = l1_loss(pred, target)
adj_value, _ = adj_seed_loss(pred)
adv_value = adversarial_loss(d_real=0.8, d_fake=0.3)
weights = LossWeights()
print(f"\nrandom prediction: L1 {l1_value:.4f}, adjacency {adj_value:.2f}, "
      f"adversarial {adv_value:.4f}")
print(f"total objective (alpha=1/3, beta=2/3): "
      f"{total_objective(adv_value, l1_value, adj_value, weights):.4f}")
print(f"generator-side term -log D(fake): "
      f"{generator_adversarial_loss(0.3):.4f}")

binary = (rng.random(shape) < 0.05).astype(np.uint8)
print(f"\nbinary plan: {binary.sum()} seeds, "
      f"{count_adjacent_pairs(binary)} face-adjacent pairs")

noisy = np.clip(binary + rng.normal(0, 0.2, shape), 0, 1)
out = compare_plans(noisy, binary)
print("prediction vs reference:",
      {k: (round(v, 4) if isinstance(v, float) else v) for k, v in out.items()})
