"""Simulated-annealing plan optimization.

The cost blends hinge penalties on coverage and organ-at-risk limits with
adjacency, needle, and seed counts::

    cost = w_ptv_v100      * max(0, ptv_v100_min - PTV_V100)
         + w_ptv_v150_excess * max(0, PTV_V150 - ptv_v150_max)
         + w_ure           * max(0, URE_V150 - ure_v150_max)
         + w_rec           * max(0, REC_V50 - rec_v50_max)
         + w_adjacency * adjacent_pairs
         + w_needle_count * needles + w_seed_count * seeds

Moves: relocate a seed within its needle, add a seed on an existing needle,
remove a seed, or swap a whole needle column to an unoccupied template
position whose column intersects the PTV. Metropolis acceptance with
geometric cooling; one sweep of iterations per temperature step. A fixed
rng_seed reproduces the run bit for bit (moves touch the evaluator in a
deterministic order).

Dose bookkeeping is incremental: a move adds or subtracts cached per-slot
dose vectors over the PTV/rectum voxel set instead of recomputing the grid.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    AnatomyCase,
    InitError,
    NeedlePlan,
    SeedPlan,
    TemplateGrid,
    ValidationError,
)
from .dosimetry import (
    PRESCRIBED_GY,
    dose_at_points,
    mask_points_mm,
    plan_metrics,
)
from .losses import count_adjacent_pairs

MOVE_TYPES = ("relocate", "add", "remove", "needle_swap")


@dataclass
class SAConfig:
    initial_temperature: float = 1.0
    cooling_rate: float = 0.95
    iterations_per_temperature: int = 200
    min_temperature: float = 1e-4
    max_wall_time: float = 170.0
    rng_seed: int = 0
    move_weights: dict = field(default_factory=lambda: {
        "relocate": 0.4, "add": 0.25, "remove": 0.25, "needle_swap": 0.1})

    def __post_init__(self):
        if not 0.0 < self.cooling_rate < 1.0:
            raise ValidationError("cooling_rate must be in (0, 1)")
        if self.initial_temperature <= 0 or self.min_temperature <= 0:
            raise ValidationError("temperatures must be positive")
        if self.iterations_per_temperature < 0:
            raise ValidationError("iterations_per_temperature must be >= 0")
        w = {m: float(self.move_weights.get(m, 0.0)) for m in MOVE_TYPES}
        if any(v < 0 for v in w.values()) or sum(w.values()) == 0:
            raise ValidationError("move_weights must be non-negative, not all zero")
        self.move_weights = w

    def to_dict(self) -> dict:
        return {
            "magic": "SPSA1",
            "initial_temperature": self.initial_temperature,
            "cooling_rate": self.cooling_rate,
            "iterations_per_temperature": self.iterations_per_temperature,
            "min_temperature": self.min_temperature,
            "max_wall_time": self.max_wall_time,
            "rng_seed": self.rng_seed,
            "move_weights": dict(self.move_weights),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SAConfig":
        keys = ("initial_temperature", "cooling_rate", "iterations_per_temperature",
                "min_temperature", "max_wall_time", "rng_seed", "move_weights")
        return cls(**{k: doc[k] for k in keys if k in doc})


@dataclass
class CostWeights:
    w_ptv_v100: float = 10.0
    w_ptv_v150_excess: float = 1.0
    w_ure: float = 5.0
    w_rec: float = 2.0
    w_adjacency: float = 1000.0
    w_needle_count: float = 0.05
    w_seed_count: float = 0.01
    targets: dict = field(default_factory=lambda: {
        "ptv_v100_min": 96.0, "ptv_v150_max": 60.0,
        "ure_v150_max": 5.0, "rec_v50_max": 17.0})

    def __post_init__(self):
        for name in ("w_ptv_v100", "w_ptv_v150_excess", "w_ure", "w_rec",
                     "w_adjacency", "w_needle_count", "w_seed_count"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        defaults = {"ptv_v100_min": 96.0, "ptv_v150_max": 60.0,
                    "ure_v150_max": 5.0, "rec_v50_max": 17.0}
        defaults.update({k: float(v) for k, v in self.targets.items()})
        self.targets = defaults

    def to_dict(self) -> dict:
        doc = {"magic": "SPCOST1"}
        for name in ("w_ptv_v100", "w_ptv_v150_excess", "w_ure", "w_rec",
                     "w_adjacency", "w_needle_count", "w_seed_count"):
            doc[name] = getattr(self, name)
        doc["targets"] = dict(self.targets)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "CostWeights":
        keys = ("w_ptv_v100", "w_ptv_v150_excess", "w_ure", "w_rec",
                "w_adjacency", "w_needle_count", "w_seed_count", "targets")
        return cls(**{k: doc[k] for k in keys if k in doc})


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ValidationError(f"{path}: unreadable config ({exc})") from None


def load_sa_config(path) -> SAConfig:
    return SAConfig.from_dict(_load_json(path))


def load_cost_weights(path) -> CostWeights:
    return CostWeights.from_dict(_load_json(path))


def default_sa_config() -> SAConfig:
    ref = resources.files("seedplan.data") / "sa_default.json"
    with resources.as_file(ref) as p:
        return load_sa_config(p)


def default_cost_weights() -> CostWeights:
    ref = resources.files("seedplan.data") / "cost_default.json"
    with resources.as_file(ref) as p:
        return load_cost_weights(p)


def _hinge_cost(v100, v150, ure, rec, pairs, needles, seeds, cw: CostWeights) -> float:
    t = cw.targets
    return (cw.w_ptv_v100 * max(0.0, t["ptv_v100_min"] - v100)
            + cw.w_ptv_v150_excess * max(0.0, v150 - t["ptv_v150_max"])
            + cw.w_ure * max(0.0, ure - t["ure_v150_max"])
            + cw.w_rec * max(0.0, rec - t["rec_v50_max"])
            + cw.w_adjacency * pairs
            + cw.w_needle_count * needles
            + cw.w_seed_count * seeds)


def cost(plan: SeedPlan, case: AnatomyCase, model, cw: CostWeights,
         prescribed: float = PRESCRIBED_GY) -> float:
    """Dosimetric plan cost, from freshly computed metrics."""
    row = plan_metrics(plan, case, model, prescribed)
    return _hinge_cost(row.ptv_v100, row.ptv_v150, row.ure_v150, row.rec_v50,
                       count_adjacent_pairs(plan), row.needles, row.seeds, cw)


class PlanEvaluator:
    """Incremental dose and V-metric evaluation over the cost structures.

    Evaluation points are one concatenated array with contiguous PTV,
    urethra, and rectum segments (urethra voxels appear twice; the
    duplication is tiny and buys gather-free V counts in the hot loop).
    Per-slot dose vectors are cached up to a fixed memory budget; on a
    default template every reachable slot fits, so each is computed once.
    """

    CACHE_BYTES = 500_000_000

    def __init__(self, case: AnatomyCase, model, strength: float,
                 prescribed: float = PRESCRIBED_GY, grid: TemplateGrid = None):
        self.case = case
        self.model = model
        self.strength = float(strength)
        self.prescribed = float(prescribed)
        self.grid = grid or TemplateGrid()

        blocks = [mask_points_mm(m, case.spacing)
                  for m in (case.ptv_mask, case.urethra_mask, case.rectum_mask)]
        if any(len(b) == 0 for b in blocks):
            raise ValidationError("PTV, urethra, and rectum must be non-empty")
        self._n = [len(b) for b in blocks]
        self.points = np.concatenate(blocks)
        self.dose = np.zeros(len(self.points))
        self._cache = {}
        self._cache_limit = max(64, self.CACHE_BYTES // (4 * len(self.points)))

    def slot_vector(self, key) -> np.ndarray:
        """Unit dose vector (float32) for a seed at effective slot (i, c, p)."""
        vec = self._cache.get(key)
        if vec is None:
            i, c, p = key
            pos = self.grid.position_mm(self.grid.template_row(i), c, p,
                                        self.case.template_origin)
            vec = dose_at_points(self.points, [pos], self.strength,
                                 self.model).astype(np.float32)
            if len(self._cache) >= self._cache_limit:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = vec
        return vec

    def dose_after(self, added=(), removed=()) -> np.ndarray:
        cand = self.dose.copy()
        for key in added:
            np.add(cand, self.slot_vector(key), out=cand)
        for key in removed:
            np.subtract(cand, self.slot_vector(key), out=cand)
        return cand

    def v_counts(self, dose_vec: np.ndarray):
        """(ptv_v100, ptv_v150, ure_v150, rec_v50) percentages."""
        n_ptv, n_ure, n_rec = self._n
        ptv = dose_vec[:n_ptv]
        ure = dose_vec[n_ptv:n_ptv + n_ure]
        rec = dose_vec[n_ptv + n_ure:]
        p = self.prescribed
        return (
            100.0 * np.count_nonzero(ptv >= p) / n_ptv,
            100.0 * np.count_nonzero(ptv >= 1.5 * p) / n_ptv,
            100.0 * np.count_nonzero(ure >= 1.5 * p) / n_ure,
            100.0 * np.count_nonzero(rec >= 0.5 * p) / n_rec,
        )

    def cost_of(self, dose_vec: np.ndarray, occ: np.ndarray, cw: CostWeights) -> float:
        v100, v150, ure, rec = self.v_counts(dose_vec)
        pairs = count_adjacent_pairs(occ)
        needles = int((occ.sum(axis=2) > 0).sum())
        return _hinge_cost(v100, v150, ure, rec, pairs, needles,
                           int(occ.sum()), cw)


def _mask_at(case: AnatomyCase, grid: TemplateGrid, mask: np.ndarray,
             i_eff: int, c: int, p: int) -> bool:
    pos = grid.position_mm(grid.template_row(i_eff), c, p, case.template_origin)
    idx = [int(round(pos[ax] / case.spacing[ax])) for ax in range(3)]
    if any(idx[ax] < 0 or idx[ax] >= case.dims[ax] for ax in range(3)):
        return False
    return bool(mask[idx[0], idx[1], idx[2]])


def _inside_ptv(case: AnatomyCase, grid: TemplateGrid, i_eff: int, c: int, p: int) -> bool:
    return _mask_at(case, grid, case.ptv_mask, i_eff, c, p)


def _track_hits_urethra(case: AnatomyCase, grid: TemplateGrid, i_eff: int, c: int) -> bool:
    return any(_mask_at(case, grid, case.urethra_mask, i_eff, c, p)
               for p in range(grid.num_planes))


def _needle_domain(case: AnatomyCase, grid: TemplateGrid) -> np.ndarray:
    """(n_eff, cols) bool: columns intersecting the PTV but not the urethra."""
    dom = np.zeros((grid.n_eff_rows, grid.cols), bool)
    for i in range(grid.n_eff_rows):
        for c in range(grid.cols):
            dom[i, c] = (any(_inside_ptv(case, grid, i, c, p)
                             for p in range(grid.num_planes))
                         and not _track_hits_urethra(case, grid, i, c))
    return dom


def init_seattle(case: AnatomyCase, grid: TemplateGrid = None,
                 needles_allowed: np.ndarray = None, ring_mm: float = 10.0,
                 source_strength: float = 0.6) -> SeedPlan:
    """Deterministic modified-peripheral starting plan.

    Needles take alternating (checkerboard) positions on the PTV boundary
    ring at the template mid-plane, plus a sparse interior grid; seeds land
    on alternating planes inside the PTV with a parity rule that makes
    face-adjacent pairs impossible by construction.
    """
    from scipy import ndimage

    grid = grid or TemplateGrid()
    if not case.ptv_mask.any():
        raise InitError("PTV is empty")
    zs = np.nonzero(case.ptv_mask.any(axis=(1, 2)))[0]
    z_mid = float(zs.mean()) * case.spacing[0]
    p_mid = int(np.clip(round((z_mid - case.template_origin[0]) / grid.plane_spacing),
                        0, grid.num_planes - 1))

    iz = int(round((case.template_origin[0] + p_mid * grid.plane_spacing) / case.spacing[0]))
    iz = int(np.clip(iz, 0, case.dims[0] - 1))
    slice_mask = case.ptv_mask[iz].astype(bool)
    if not slice_mask.any():
        raise InitError("PTV does not cover the template mid-plane")
    edt = ndimage.distance_transform_edt(slice_mask, sampling=case.spacing[1:])

    occ = np.zeros((grid.n_eff_rows, grid.cols, grid.num_planes), np.uint8)
    found_needle = False
    for i in range(grid.n_eff_rows):
        for c in range(grid.cols):
            if needles_allowed is not None and not needles_allowed[i, c]:
                continue
            if not _inside_ptv(case, grid, i, c, p_mid):
                continue
            if _track_hits_urethra(case, grid, i, c):
                continue
            pos = grid.position_mm(grid.template_row(i), c, p_mid, case.template_origin)
            iy = int(round(pos[1] / case.spacing[1]))
            ix = int(round(pos[2] / case.spacing[2]))
            depth = edt[iy, ix]
            on_ring = depth <= ring_mm
            take = ((i + c) % 2 == 0) if on_ring else (i % 2 == 0 and c % 2 == 0)
            if not take:
                continue
            found_needle = True
            for p in range(grid.num_planes):
                if p % 2 == (i + c) % 2 and _inside_ptv(case, grid, i, c, p):
                    occ[i, c, p] = 1
    if not found_needle or occ.sum() == 0:
        raise InitError("PTV too small to admit any needle")
    return SeedPlan(grid, occ, source_strength)


def init_from_needles(needles: NeedlePlan, case: AnatomyCase,
                      source_strength: float = 0.6) -> SeedPlan:
    """Seeds on alternating planes along each needle, inside the PTV only."""
    grid = needles.grid
    if needles.needle_count() == 0:
        raise InitError("needle plan is empty")
    occ = np.zeros((grid.n_eff_rows, grid.cols, grid.num_planes), np.uint8)
    any_hit = False
    for i, c in np.argwhere(needles.occupancy):
        planes = [p for p in range(grid.num_planes)
                  if _inside_ptv(case, grid, int(i), int(c), p)]
        if planes:
            any_hit = True
        for p in planes:
            if p % 2 == (int(i) + int(c)) % 2:
                occ[i, c, p] = 1
    if not any_hit:
        raise InitError("no needle intersects the PTV")
    return SeedPlan(grid, occ, source_strength)


@dataclass
class AnnealResult:
    plan: SeedPlan
    trace: list  # rows (iteration, temperature, cost, best_cost, accepted, move_type)
    best_cost: float
    truncated: bool = False
    iterations: int = 0
    needles: NeedlePlan = None  # working needle set when the best plan was taken


def write_trace(path, trace) -> Path:
    lines = ["iteration,temperature,cost,best_cost,accepted,move_type"]
    for it, temp, c, best, acc, move in trace:
        lines.append(f"{it},{temp:.10g},{c:.10g},{best:.10g},{int(acc)},{move}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def anneal(initial: SeedPlan, case: AnatomyCase, model, sa: SAConfig,
           cw: CostWeights, needles: NeedlePlan = None,
           prescribed: float = PRESCRIBED_GY, _audit: bool = False) -> AnnealResult:
    """Metropolis fine-tuning of a starting plan.

    The working needle set starts from `needles` (or the plan's own
    footprint) and evolves only through needle_swap moves, so no move can
    create an off-needle seed.
    """
    grid = initial.grid
    if needles is not None and needles.grid != grid:
        raise ValidationError("needle plan grid differs from seed plan grid")
    occ = initial.occupancy.copy()
    needle_set = (needles.occupancy.astype(bool).copy() if needles is not None
                  else initial.needle_footprint().astype(bool))
    needle_set |= initial.needle_footprint().astype(bool)
    domain = _needle_domain(case, grid)

    ev = PlanEvaluator(case, model, initial.source_strength, prescribed, grid)
    ev.dose = ev.dose_after(added=[tuple(map(int, s)) for s in np.argwhere(occ)])

    cur_cost = ev.cost_of(ev.dose, occ, cw)
    best_occ = occ.copy()
    best_needles = needle_set.copy()
    best_cost = cur_cost
    trace = []
    rng = np.random.default_rng(sa.rng_seed)
    weights = np.array([sa.move_weights[m] for m in MOVE_TYPES])
    weights = weights / weights.sum()

    start = time.perf_counter()
    truncated = False
    iteration = 0
    temp = sa.initial_temperature
    while temp >= sa.min_temperature and not truncated:
        for _ in range(sa.iterations_per_temperature):
            if time.perf_counter() - start > sa.max_wall_time:
                truncated = True
                break
            move = MOVE_TYPES[int(rng.choice(len(MOVE_TYPES), p=weights))]
            proposal = _propose(move, occ, needle_set, domain, grid, rng)
            if proposal is None:
                trace.append((iteration, temp, cur_cost, best_cost, 0, move))
                iteration += 1
                continue
            added, removed, apply_fn = proposal
            cand_dose = ev.dose_after(added, removed)
            cand_occ = occ.copy()
            apply_fn(cand_occ)
            cand_cost = ev.cost_of(cand_dose, cand_occ, cw)
            dc = cand_cost - cur_cost
            accept = dc <= 0.0 or rng.random() < math.exp(-dc / temp)
            if accept:
                occ = cand_occ
                ev.dose = cand_dose
                cur_cost = cand_cost
                if move == "needle_swap":
                    (src, dst) = apply_fn.swap
                    needle_set[src] = False
                    needle_set[dst] = True
                if cur_cost < best_cost:
                    best_cost = cur_cost
                    best_occ = occ.copy()
                    best_needles = needle_set.copy()
                if _audit and np.any(occ.sum(axis=2) * ~needle_set):
                    raise AssertionError("move created an off-needle seed")
            trace.append((iteration, temp, cur_cost, best_cost, int(accept), move))
            iteration += 1
        temp *= sa.cooling_rate

    plan = SeedPlan(grid, best_occ, initial.source_strength)
    return AnnealResult(plan, trace, best_cost, truncated, iteration,
                        needles=NeedlePlan(grid, best_needles.astype(np.uint8)))


def _propose(move, occ, needle_set, domain, grid, rng):
    """Returns (added_slots, removed_slots, apply_fn) or None if infeasible."""
    if move == "relocate":
        seeds = np.argwhere(occ)
        if len(seeds) == 0:
            return None
        i, c, p = map(int, seeds[rng.integers(len(seeds))])
        free = np.nonzero(occ[i, c] == 0)[0]
        if free.size == 0:
            return None
        q = int(free[rng.integers(free.size)])

        def apply_fn(a):
            a[i, c, p] = 0
            a[i, c, q] = 1
        return [(i, c, q)], [(i, c, p)], apply_fn

    if move == "add":
        cols = np.argwhere(needle_set)
        if len(cols) == 0:
            return None
        i, c = map(int, cols[rng.integers(len(cols))])
        free = np.nonzero(occ[i, c] == 0)[0]
        if free.size == 0:
            return None
        q = int(free[rng.integers(free.size)])

        def apply_fn(a):
            a[i, c, q] = 1
        return [(i, c, q)], [], apply_fn

    if move == "remove":
        seeds = np.argwhere(occ)
        if len(seeds) == 0:
            return None
        i, c, p = map(int, seeds[rng.integers(len(seeds))])

        def apply_fn(a):
            a[i, c, p] = 0
        return [], [(i, c, p)], apply_fn

    # needle_swap
    src_cols = np.argwhere(needle_set & (occ.sum(axis=2) > 0))
    dst_cols = np.argwhere(domain & ~needle_set)
    if len(src_cols) == 0 or len(dst_cols) == 0:
        return None
    si, sc = map(int, src_cols[rng.integers(len(src_cols))])
    di, dc_ = map(int, dst_cols[rng.integers(len(dst_cols))])
    planes = [int(p) for p in np.nonzero(occ[si, sc])[0]]

    def apply_fn(a):
        a[si, sc, :] = 0
        for p in planes:
            a[di, dc_, p] = 1
    apply_fn.swap = ((si, sc), (di, dc_))
    return [(di, dc_, p) for p in planes], [(si, sc, p) for p in planes], apply_fn
