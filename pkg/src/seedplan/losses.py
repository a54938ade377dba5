"""Training objective terms with analytic gradients, plus plan-comparison
metrics (AUC, Dice, adjacency counts).

The adjacency penalty correlates the probability tensor with a 3x3x3
face-neighbor kernel (center 7, faces 1, zero padding) and hinges the
response above a threshold:

    value = sum(max(0, (pred (*) k) - threshold))

The kernel, threshold, and mixing weights live in data/loss_config.json so
external trainers share one definition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

from .core import ProbPlan, SeedPlan, UndefinedMetricError, ValidationError

CLAMP_EPS = 1e-7


def face_neighbor_kernel(center: float = 7.0, face: float = 1.0) -> np.ndarray:
    k = np.zeros((3, 3, 3))
    k[1, 1, 1] = center
    for axis in range(3):
        for step in (0, 2):
            idx = [1, 1, 1]
            idx[axis] = step
            k[tuple(idx)] = face
    return k


@dataclass
class AdjKernel:
    """3x3x3 adjacency-detection kernel: center 7, six faces 1, rest 0."""

    values: np.ndarray = None

    def __post_init__(self):
        if self.values is None:
            self.values = face_neighbor_kernel()
        self.values = np.asarray(self.values, np.float64)
        if self.values.shape != (3, 3, 3):
            raise ValidationError("adjacency kernel must be 3x3x3")


@dataclass
class LossWeights:
    alpha: float = 1.0 / 3.0
    beta: float = 2.0 / 3.0
    adjacency_threshold: float = 5.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("loss weights must be non-negative")
        if self.adjacency_threshold <= 0:
            raise ValidationError("adjacency threshold must be positive")


def load_loss_config(path=None):
    """(AdjKernel, LossWeights) from the shared definition file."""
    if path is None:
        ref = resources.files("seedplan.data") / "loss_config.json"
        with resources.as_file(ref) as p:
            doc = json.loads(Path(p).read_text())
    else:
        doc = json.loads(Path(path).read_text())
    kernel = AdjKernel(np.asarray(doc["kernel"], np.float64).reshape(doc["kernel_dims"]))
    weights = LossWeights(
        alpha=float(doc["alpha"]),
        beta=float(doc["beta"]),
        adjacency_threshold=float(doc["adjacency_threshold"]),
    )
    return kernel, weights


def _pred_array(pred) -> np.ndarray:
    arr = pred.values if isinstance(pred, ProbPlan) else np.asarray(pred, np.float64)
    if not np.isfinite(arr).all():
        raise ValidationError("prediction must be finite")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("prediction values must lie in [0, 1]")
    return arr


def adj_seed_loss(pred, weights: LossWeights = None, kernel: AdjKernel = None):
    """(value, gradient) of the adjacent-seed penalty.

    Gradient is the exact subgradient: positions with response exactly at
    the threshold contribute zero.
    """
    weights = weights or LossWeights()
    k = (kernel or AdjKernel()).values
    x = _pred_array(pred)
    resp = ndimage.correlate(x, k, mode="constant", cval=0.0) - weights.adjacency_threshold
    active = resp > 0.0
    value = float(resp[active].sum())
    grad = ndimage.convolve(active.astype(np.float64), k, mode="constant", cval=0.0)
    return value, grad


def l1_loss(pred, target):
    """(value, gradient): mean absolute difference and its sign subgradient."""
    p = _pred_array(pred)
    t = target.occupancy.astype(np.float64) if isinstance(target, SeedPlan) \
        else np.asarray(target, np.float64)
    if p.shape != t.shape:
        raise ValidationError(f"shape mismatch {p.shape} vs {t.shape}")
    diff = p - t
    n = diff.size
    value = float(np.abs(diff).sum() / n)
    grad = np.sign(diff) / n
    return value, grad


def adversarial_loss(d_real: float, d_fake: float) -> float:
    """Discriminator objective value log D(real) + log(1 - D(fake))."""
    dr = min(max(float(d_real), CLAMP_EPS), 1.0 - CLAMP_EPS)
    df = min(max(float(d_fake), CLAMP_EPS), 1.0 - CLAMP_EPS)
    return math.log(dr) + math.log(1.0 - df)


def generator_adversarial_loss(d_fake: float) -> float:
    """Non-saturating generator form -log D(fake)."""
    df = min(max(float(d_fake), CLAMP_EPS), 1.0 - CLAMP_EPS)
    return -math.log(df)


def total_objective(adv: float, l1: float, adj: float,
                    weights: LossWeights = None) -> float:
    weights = weights or LossWeights()
    for name, v in (("adv", adv), ("l1", l1), ("adj", adj)):
        if not math.isfinite(v):
            raise ValidationError(f"{name} term is not finite")
    return weights.alpha * adv + weights.beta * l1 + weights.alpha * adj


def _occupancy(plan) -> np.ndarray:
    arr = plan.occupancy if isinstance(plan, SeedPlan) else np.asarray(plan)
    if not np.isin(np.unique(arr), (0, 1)).all():
        raise ValidationError("plan must be binary")
    return arr.astype(np.uint8)


def count_adjacent_pairs(plan) -> int:
    """Unordered seed pairs at face-neighboring (6-connected) grid positions."""
    occ = _occupancy(plan)
    pairs = 0
    for axis in range(occ.ndim):
        a = np.swapaxes(occ, 0, axis)
        pairs += int((a[1:] & a[:-1]).sum())
    return pairs


def compare_plans(pred, actual, bin_threshold: float = 0.5,
                  require_auc: bool = True) -> dict:
    """Prediction-vs-reference metrics: AUC, Dice, adjacent pairs, seed diff.

    AUC is the rank statistic of pred values against actual labels with ties
    averaged. Dice binarizes pred at bin_threshold. A single-class reference
    makes AUC undefined: raises by default, or reports auc=None when
    require_auc is False (Dice and counts are still computed).
    """
    p = _pred_array(pred)
    a = _occupancy(actual)
    if p.shape != a.shape:
        raise ValidationError(f"shape mismatch {p.shape} vs {a.shape}")

    binarized = (p >= bin_threshold).astype(np.uint8)
    inter = int((binarized & a).sum())
    np_, na = int(binarized.sum()), int(a.sum())
    dice = 1.0 if np_ + na == 0 else 2.0 * inter / (np_ + na)
    result = {
        "auc": None,
        "dice": dice,
        "adj_seeds": count_adjacent_pairs(binarized),
        "seed_diff": abs(np_ - na),
    }

    labels = a.ravel()
    n1 = int(labels.sum())
    n0 = labels.size - n1
    if n1 == 0 or n0 == 0:
        if require_auc:
            raise UndefinedMetricError("AUC undefined: reference has a single class")
        return result
    ranks = rankdata(p.ravel())
    u = ranks[labels == 1].sum() - n1 * (n1 + 1) / 2.0
    result["auc"] = float(u / (n1 * n0))
    return result
