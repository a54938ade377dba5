"""Golden-fixture loss parity against the engine.

Recomputes each fixture's adjacency, L1, adversarial, and total values with
this package's torch implementations (float64) and reports the worst
absolute deviation from the engine's expected values, plus the relative
gradient deviation of the adjacency term under automatic differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .formats import read_golden, read_loss_config
from .losses import adjacency_penalty, l1_mean, total_objective

CLAMP_EPS = 1e-7


@dataclass
class ParityReport:
    count: int = 0
    max_dev: dict = field(default_factory=lambda: {
        "adj": 0.0, "l1": 0.0, "adv": 0.0, "total": 0.0})
    max_grad_rel_dev: float = 0.0
    failures: list = field(default_factory=list)

    def worst(self) -> float:
        return max(self.max_dev.values())


def _to_plan_layout(arr: np.ndarray) -> np.ndarray:
    # fixtures are (rows, cols, planes); conv layout is (planes, rows, cols)
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def loss_parity(golden_paths, loss_config_path, tolerance: float = 1e-5,
                grad_tolerance: float = 1e-4) -> ParityReport:
    cfg = read_loss_config(loss_config_path)
    kernel = torch.tensor(cfg["kernel"], dtype=torch.float64)
    report = ParityReport()
    for path in sorted(Path(p) for p in golden_paths):
        doc = read_golden(path)
        w = doc["weights"]
        pred = torch.tensor(_to_plan_layout(doc["pred"]), dtype=torch.float64,
                            requires_grad=True)
        target = torch.tensor(_to_plan_layout(doc["target"]), dtype=torch.float64)

        adj = adjacency_penalty(pred, kernel, w["adjacency_threshold"])
        l1 = l1_mean(pred, target)
        dr = min(max(doc["d_real"], CLAMP_EPS), 1.0 - CLAMP_EPS)
        df = min(max(doc["d_fake"], CLAMP_EPS), 1.0 - CLAMP_EPS)
        adv = math.log(dr) + math.log(1.0 - df)
        total = total_objective(
            torch.tensor(adv, dtype=torch.float64), l1, adj,
            w["alpha"], w["beta"]).detach().item()

        got = {"adj": adj.detach().item(), "l1": l1.detach().item(),
               "adv": adv, "total": total}
        ok = True
        for key, value in got.items():
            dev = abs(value - doc["expected"][key])
            report.max_dev[key] = max(report.max_dev[key], dev)
            if dev > tolerance:
                ok = False
        if "expected_grad_adj" in doc:
            adj.backward()
            grad = pred.grad.numpy()
            want = _to_plan_layout(doc["expected_grad_adj"])
            scale = np.maximum(np.abs(want), 1e-12)
            rel = float(np.max(np.abs(grad - want) / scale))
            report.max_grad_rel_dev = max(report.max_grad_rel_dev, rel)
            if rel > grad_tolerance:
                ok = False
        if not ok:
            report.failures.append(str(path))
        report.count += 1
    return report
