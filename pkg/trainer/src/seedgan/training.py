"""Training loop: alternating generator/discriminator updates with the
mixed adversarial + L1 + adjacency objective.

Checkpoints keep the lowest-validation-loss weights (written atomically);
the CSV log records per-epoch losses and validation plan metrics.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import combined_records, load_samples
from .encoding import merge_halves, plan_from_torch_layout
from .formats import find_engine_loss_config, read_loss_config
from .losses import (
    adjacency_penalty,
    adversarial_value,
    discriminator_loss,
    generator_adversarial,
    l1_mean,
    total_objective,
)
from .models import PlanDiscriminator, PlanGenerator

LOG_HEADER = "epoch,L_adv,L_L1,L_adj,total,val_dice,val_adj_seeds"


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-5            # published recipe default; toy runs raise it
    beta1: float = 0.5
    beta2: float = 0.99
    seed: int = 0
    adjacency_enabled: bool = True
    loss_config: str = None     # path; None resolves the engine's shipped file
    bin_threshold: float = 0.5
    generator_width: int = 24

    def resolve_loss_config(self) -> dict:
        path = self.loss_config or find_engine_loss_config()
        return read_loss_config(path)


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    log_rows: list = field(default_factory=list)
    best_val_total: float = float("inf")
    best_epoch: int = -1


def count_adjacent_pairs(binary: np.ndarray) -> int:
    occ = binary.astype(np.uint8)
    pairs = 0
    for axis in range(occ.ndim):
        a = np.swapaxes(occ, 0, axis)
        pairs += int((a[1:] & a[:-1]).sum())
    return pairs


def dice_coefficient(binary: np.ndarray, reference: np.ndarray) -> float:
    p, a = int(binary.sum()), int(reference.sum())
    if p + a == 0:
        return 1.0
    inter = int((binary.astype(bool) & reference.astype(bool)).sum())
    return 2.0 * inter / (p + a)


def _atomic_save(payload: dict, path: Path):
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def train(manifest_path, config: TrainConfig, out_dir) -> TrainResult:
    """manifest_path: one manifest, or a list of them (plan variants)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / "generator_best.pt"
    log_path = out_dir / "training_log.csv"

    loss_cfg = config.resolve_loss_config()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    device = torch.device("cpu")

    if isinstance(manifest_path, (str, Path)):
        manifest_path = [manifest_path]
    records = combined_records(manifest_path)
    train_samples = load_samples(records["train"])
    val_samples = load_samples(records["val"]) or train_samples
    if not train_samples:
        raise ValueError("manifest has no training cases")
    val_refs = {(s.case_id, s.side): s.y for s in val_samples}

    planes, rows, half_cols = train_samples[0].y.shape
    gen = PlanGenerator(planes, rows, half_cols, config.generator_width).to(device)
    disc = PlanDiscriminator(planes).to(device)
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.lr,
                             betas=(config.beta1, config.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.lr,
                             betas=(config.beta1, config.beta2))
    kernel = torch.tensor(loss_cfg["kernel"], dtype=torch.float32)
    alpha, beta = loss_cfg["alpha"], loss_cfg["beta"]
    threshold = loss_cfg["threshold"]

    result = TrainResult(checkpoint_path, log_path)
    log_rows = [LOG_HEADER]

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_samples))
        ep_adv = ep_l1 = ep_adj = ep_total = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            x = torch.from_numpy(np.stack([train_samples[i].x for i in idx]))
            y = torch.from_numpy(np.stack([train_samples[i].y for i in idx]))

            # discriminator step
            with torch.no_grad():
                fake = gen(x)
            d_real = disc(x, y)
            d_fake = disc(x, fake)
            d_loss = discriminator_loss(d_real, d_fake)
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

            # generator step
            fake = gen(x)
            d_fake = disc(x, fake)
            g_adv = generator_adversarial(d_fake)
            g_l1 = l1_mean(fake, y)
            g_adj = adjacency_penalty(fake, kernel, threshold) / len(idx)
            if not config.adjacency_enabled:
                g_adj = g_adj * 0.0
            g_total = total_objective(g_adv, g_l1, g_adj, alpha, beta)
            opt_g.zero_grad()
            g_total.backward()
            opt_g.step()

            ep_adv += adversarial_value(d_real.detach(), d_fake.detach()).item()
            ep_l1 += g_l1.detach().item()
            ep_adj += g_adj.detach().item()
            ep_total += g_total.detach().item()
            n_batches += 1

        # validation: each arm's own objective + merged-plan quality
        val_total, dices, adj_counts = _evaluate(gen, val_samples, val_refs,
                                                 loss_cfg, config, device,
                                                 config.adjacency_enabled)
        row = (f"{epoch},{ep_adv / n_batches:.6g},{ep_l1 / n_batches:.6g},"
               f"{ep_adj / n_batches:.6g},{ep_total / n_batches:.6g},"
               f"{np.mean(dices):.6g},{np.mean(adj_counts):.6g}")
        log_rows.append(row)
        if not np.isfinite(ep_total):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")

        if val_total < result.best_val_total:
            result.best_val_total = val_total
            result.best_epoch = epoch
            _atomic_save({
                "generator": gen.state_dict(),
                "shape": (planes, rows, half_cols),
                "width": config.generator_width,
                "bin_threshold": config.bin_threshold,
                "epoch": epoch,
                "val_total": val_total,
            }, checkpoint_path)

    log_path.write_text("\n".join(log_rows) + "\n")
    result.log_rows = log_rows[1:]
    return result


def _evaluate(gen, val_samples, val_refs, loss_cfg, config, device,
              adjacency_enabled=True):
    kernel = torch.tensor(loss_cfg["kernel"], dtype=torch.float32)
    adj_weight = loss_cfg["alpha"] if adjacency_enabled else 0.0
    totals = []
    halves = {}
    refs = {}
    gen.eval()
    with torch.no_grad():
        for s in val_samples:
            x = torch.from_numpy(s.x).unsqueeze(0).to(device)
            y = torch.from_numpy(s.y).unsqueeze(0).to(device)
            pred = gen(x)
            l1 = l1_mean(pred, y)
            adj = adjacency_penalty(pred.squeeze(0), kernel, loss_cfg["threshold"])
            totals.append(float(loss_cfg["beta"] * l1 + adj_weight * adj))
            halves.setdefault(s.case_id, {})[s.side] = pred.squeeze(0).cpu().numpy()
            refs.setdefault(s.case_id, {})[s.side] = val_refs[(s.case_id, s.side)]
    gen.train()

    dices, adj_counts = [], []
    for case_id, sides in halves.items():
        if "left" not in sides or "right" not in sides:
            continue
        merged = merge_halves(plan_from_torch_layout(sides["left"]),
                              plan_from_torch_layout(sides["right"]))
        ref = merge_halves(plan_from_torch_layout(refs[case_id]["left"]),
                           plan_from_torch_layout(refs[case_id]["right"]))
        binary = (merged >= config.bin_threshold).astype(np.uint8)
        dices.append(dice_coefficient(binary, ref >= 0.5))
        adj_counts.append(count_adjacent_pairs(binary))
    return float(np.mean(totals)), dices, adj_counts


def load_generator(checkpoint_path) -> tuple:
    payload = torch.load(checkpoint_path, map_location="cpu", weights_only=True)
    planes, rows, half_cols = payload["shape"]
    gen = PlanGenerator(planes, rows, half_cols, payload.get("width", 24))
    gen.load_state_dict(payload["generator"])
    gen.eval()
    return gen, payload
