"""Deterministic plan cleanup: binarization, adjacent-seed resolution, and
per-plane uniformization.

fix_adjacent scans adjacent pairs in (row, col, plane) ascending order and,
for each, relocates the later seed to the nearest empty plane slot on its
own needle that creates no new adjacency (ties break toward the smaller
plane index); when no such slot exists the seed is removed. uniformize
greedily moves one seed at a time from the most- to the least-populated
PTV-intersecting plane, guarded so PTV V100 never drops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AnatomyCase, NeedlePlan, ProbPlan, SeedPlan, ValidationError
from .dosimetry import PRESCRIBED_GY, dose_at_points, mask_points_mm
from .losses import count_adjacent_pairs


def binarize(pred: ProbPlan, needles: NeedlePlan, threshold: float = 0.5,
             source_strength: float = 0.6) -> SeedPlan:
    """Seed wherever pred >= threshold on a needle (excluded rows are
    unrepresentable in the effective-row arrays)."""
    if pred.grid != needles.grid:
        raise ValidationError("probability plan and needle plan grids differ")
    occ = (pred.values >= threshold) & (needles.occupancy[:, :, None] > 0)
    return SeedPlan(pred.grid, occ.astype(np.uint8), source_strength)


def _first_adjacent_pair(occ: np.ndarray):
    """Lexicographically first (a, b) adjacent pair, a < b, or None."""
    best = None
    for axis in range(3):
        a = np.swapaxes(occ, 0, axis)
        for h in np.argwhere(a[:-1] & a[1:]):
            fa = list(h)
            fb = list(h)
            fb[0] += 1
            pair = tuple(sorted((_unswap(fa, axis), _unswap(fb, axis))))
            if best is None or pair < best:
                best = pair
    return best


def _unswap(idx, axis):
    idx = list(idx)
    idx[0], idx[axis] = idx[axis], idx[0]
    return tuple(int(v) for v in idx)


def _creates_adjacency(occ: np.ndarray, i: int, c: int, p: int) -> bool:
    shape = occ.shape
    for d in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
        q = (i + d[0], c + d[1], p + d[2])
        if all(0 <= q[ax] < shape[ax] for ax in range(3)) and occ[q]:
            return True
    return False


def fix_adjacent(plan: SeedPlan) -> SeedPlan:
    """Relocate-else-remove until no adjacent pairs remain. Idempotent."""
    occ = plan.occupancy.copy()
    planes = occ.shape[2]
    while True:
        pair = _first_adjacent_pair(occ)
        if pair is None:
            break
        _, later = pair
        i, c, p = later
        occ[i, c, p] = 0
        best = None
        for q in range(planes):
            if occ[i, c, q] or _creates_adjacency(occ, i, c, q):
                continue
            d = abs(q - p)
            if best is None or d < best[0] or (d == best[0] and q < best[1]):
                best = (d, q)
        if best is not None:
            occ[i, c, best[1]] = 1
    return SeedPlan(plan.grid, occ, plan.source_strength)


@dataclass
class UniformizeResult:
    plan: SeedPlan
    moves: int = 0
    blocked: bool = False


def uniformize(plan: SeedPlan, case: AnatomyCase, model,
               needles: NeedlePlan = None, tolerance: int = 1,
               prescribed: float = PRESCRIBED_GY) -> UniformizeResult:
    """Even out per-plane seed counts without losing PTV V100.

    Only planes whose template position set intersects the PTV take part;
    destination slots must sit on an existing needle and stay
    adjacency-free. Stops when the spread is within tolerance, when a move
    would reduce PTV V100 (blocked flag), or after seed_count iterations.
    """
    if count_adjacent_pairs(plan) != 0:
        raise ValidationError("uniformize expects an adjacency-free plan")
    grid = plan.grid
    occ = plan.occupancy.copy()
    needle_set = (needles.occupancy.astype(bool) if needles is not None
                  else plan.needle_footprint().astype(bool))
    needle_set = needle_set | plan.needle_footprint().astype(bool)

    from .annealing import _inside_ptv  # shared registration helper

    ptv_planes = [p for p in range(grid.num_planes)
                  if any(_inside_ptv(case, grid, i, c, p)
                         for i in range(grid.n_eff_rows)
                         for c in range(grid.cols))]
    if len(ptv_planes) < 2 or plan.seed_count() == 0:
        return UniformizeResult(SeedPlan(grid, occ, plan.source_strength))

    pts = mask_points_mm(case.ptv_mask, case.spacing)
    thr = prescribed

    def slot_dose(i, c, p):
        pos = grid.position_mm(grid.template_row(i), c, p, case.template_origin)
        return dose_at_points(pts, [pos], plan.source_strength, model)

    dose = np.zeros(len(pts))
    for i, c, p in zip(*np.nonzero(occ)):
        dose = dose + slot_dose(int(i), int(c), int(p))

    moves = 0
    blocked = False
    for _ in range(plan.seed_count()):
        counts = {p: int(occ[:, :, p].sum()) for p in ptv_planes}
        spread = max(counts.values()) - min(counts.values())
        if spread <= tolerance:
            break
        src = min(p for p, n in counts.items() if n == max(counts.values()))
        dst = min(p for p, n in counts.items() if n == min(counts.values()))
        v100_before = int((dose >= thr).sum())

        applied = False
        for i, c in map(tuple, np.argwhere(occ[:, :, src])):
            occ[i, c, src] = 0
            d_removed = slot_dose(i, c, src)
            for ti, tc in map(tuple, np.argwhere(needle_set)):
                if occ[ti, tc, dst] or _creates_adjacency(occ, ti, tc, dst):
                    continue
                cand = dose - d_removed + slot_dose(ti, tc, dst)
                if int((cand >= thr).sum()) >= v100_before:
                    occ[ti, tc, dst] = 1
                    dose = cand
                    moves += 1
                    applied = True
                    break
            if applied:
                break
            occ[i, c, src] = 1  # restore; try the next source seed
        if not applied:
            blocked = True
            break
    return UniformizeResult(SeedPlan(grid, occ, plan.source_strength), moves, blocked)
