"""Synthetic anatomy and reference-plan dataset generation.

Anatomy recipe (1 mm isotropic voxels):

- CTV: superellipsoid |x/a|^n + |y/b|^n + |z/c|^n <= 1 with prostate-like
  base proportions, randomized axis multipliers, a random exponent
  n in [2.0, 2.6], and a low-order directional surface perturbation. The
  lateral axes are rescaled by bisection until the voxelized volume matches
  the request within 2%.
- PTV: CTV dilated 3 mm laterally and anteriorly (-y), 0 mm posteriorly.
- Urethra: 7 mm diameter tube along z through the CTV centroid, clipped to
  the CTV.
- Rectum: posterior cylinder with a 2-5 mm random gap to the PTV.

Axis caps keep every case inside the needle template's reach and the
14-plane capacity. The template origin is integer mm so grid points land
exactly on voxel centers.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from .annealing import (
    CostWeights,
    SAConfig,
    anneal,
    default_cost_weights,
    default_sa_config,
    init_from_needles,
)
from .core import AnatomyCase, InitError, NeedlePlan, SeedPlan, TemplateGrid, ValidationError
from .fileio import write_case, write_manifest, write_plan
from .postprocess import fix_adjacent, uniformize

AXIS_CAPS = (29.5, 21.5, 28.0)  # (c_z, b_y, a_x) mm, perturbation included
PERT_SIGMA = 0.012
PERT_CLIP = 0.03


def _superellipsoid_volume_factor(n: float) -> float:
    return 8.0 * gamma_fn(1.0 + 1.0 / n) ** 3 / gamma_fn(1.0 + 3.0 / n)


def _carve_ctv(dims, center, axes, n, pert_coeffs):
    nz, ny, nx = dims
    cz, cy, cx = center
    c, b, a = axes
    z = (np.arange(nz) - cz)[:, None, None]
    y = (np.arange(ny) - cy)[None, :, None]
    x = (np.arange(nx) - cx)[None, None, :]
    f = (np.abs(z / c) ** n + np.abs(y / b) ** n + np.abs(x / a) ** n) ** (1.0 / n)
    rho = np.sqrt(z * z + y * y + x * x)
    rho = np.where(rho == 0, 1.0, rho)
    uz, uy, ux = z / rho, y / rho, x / rho
    a1, a2, a3, b1, b2, b3 = pert_coeffs
    g = 1.0 + a1 * ux + a2 * uy + a3 * uz + b1 * ux * uy + b2 * uy * uz + b3 * ux * uz
    return (f <= g).astype(np.uint8)


def _ptv_structure() -> np.ndarray:
    se = np.zeros((1, 7, 7), bool)
    for dy in range(-3, 1):
        for dx in range(-3, 4):
            if dy * dy + dx * dx <= 9:
                se[0, 3 + dy, 3 + dx] = True
    return se


def gen_anatomy(rng_seed: int, volume_cc: float) -> AnatomyCase:
    """Deterministic synthetic case with the requested CTV volume."""
    if not 20.0 <= volume_cc <= 70.0:
        raise ValidationError(f"volume_cc {volume_cc} outside [20, 70]")
    rng = np.random.default_rng(rng_seed)

    n = float(rng.uniform(2.0, 2.6))
    mult = rng.uniform(0.8, 1.2, size=3)  # +-20% around the base proportions
    pert = np.clip(rng.normal(0.0, PERT_SIGMA, size=6), -PERT_CLIP, PERT_CLIP)
    gap = float(rng.uniform(2.0, 5.0))
    rect_radius = float(rng.uniform(10.0, 13.0))

    target_mm3 = volume_cc * 1000.0
    product = target_mm3 / _superellipsoid_volume_factor(n)
    base = np.array([1.0 * mult[0], 0.80 * mult[1], 1.15 * mult[2]])  # (z, y, x)
    k = (product / float(np.prod(base))) ** (1.0 / 3.0)
    axes = base * k
    # cap axes to the template envelope, pushing lost volume to the free axes
    for _ in range(4):
        over = axes > AXIS_CAPS
        if not over.any():
            break
        clipped = np.minimum(axes, AXIS_CAPS)
        deficit = product / float(np.prod(clipped))
        free = ~over
        if not free.any():
            break
        clipped[free] *= deficit ** (1.0 / free.sum())
        axes = clipped
    caps = np.array(AXIS_CAPS)
    hi_axes = np.minimum(axes * 1.1, caps)
    cz = int(math.ceil(hi_axes[0] * 1.04)) + 4
    cy = int(math.ceil(hi_axes[1] * 1.04)) + 5
    cx = int(math.ceil(hi_axes[2] * 1.04)) + 6
    dims = (2 * cz + 1,
            cy + int(math.ceil(hi_axes[1] * 1.04)) + 10 + int(math.ceil(2 * rect_radius)) + 4,
            2 * cx + 1)
    center = (float(cz), float(cy), float(cx))

    # volume solve: grow or shrink all axes together, each clamped to its cap
    def carve(t):
        scaled = np.minimum(axes * (1.0 + t), caps)
        return _carve_ctv(dims, center, scaled, n, pert)

    def measure(t):
        return int(carve(t).sum())

    lo, hi = -0.12, 0.12
    if measure(lo) > target_mm3 or measure(hi) < target_mm3:
        raise ValidationError(
            f"volume {volume_cc} cc unreachable within template envelope")
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if measure(mid) >= target_mm3:
            hi = mid
        else:
            lo = mid
        if abs(measure(hi) - target_mm3) <= 0.005 * target_mm3:
            break
    ctv = carve(hi)

    ptv = ndimage.binary_dilation(ctv.astype(bool), structure=_ptv_structure())
    ptv = ptv.astype(np.uint8)

    idx = np.argwhere(ctv)
    zc, yc, xc = idx.mean(axis=0)
    yy = np.arange(dims[1])[None, :, None]
    xx = np.arange(dims[2])[None, None, :]
    tube = ((yy - yc) ** 2 + (xx - xc) ** 2) <= 3.5 ** 2
    urethra = (tube & ctv.astype(bool)).astype(np.uint8)

    ptv_idx = np.argwhere(ptv)
    y_post = int(ptv_idx[:, 1].max())
    axis_y = y_post + gap + rect_radius
    zz = np.arange(dims[0])[:, None, None]
    z0, z1 = int(ptv_idx[:, 0].min()), int(ptv_idx[:, 0].max())
    cyl = (((yy - axis_y) ** 2 + (xx - xc) ** 2) <= rect_radius ** 2)
    rectum = (cyl & (zz >= z0 - 3) & (zz <= z1 + 3)).astype(np.uint8)

    if z1 - z0 > 13 * 5:
        raise ValidationError("generated anatomy exceeds the 14-plane capacity")
    ptv_centroid = np.argwhere(ptv).mean(axis=0)
    origin = (float(z0), round(float(ptv_centroid[1])) - 27.0,
              round(float(ptv_centroid[2])) - 30.0)
    return AnatomyCase(ptv, ctv, urethra, rectum, spacing=(1.0, 1.0, 1.0),
                       template_origin=origin, case_id=f"phantom-{rng_seed}")


def _mid_plane_context(case: AnatomyCase, grid: TemplateGrid):
    zs = np.nonzero(case.ptv_mask.any(axis=(1, 2)))[0]
    if zs.size == 0:
        raise InitError("PTV is empty")
    z_mid = float(zs.mean()) * case.spacing[0]
    p_mid = int(np.clip(round((z_mid - case.template_origin[0]) / grid.plane_spacing),
                        0, grid.num_planes - 1))
    iz = int(round((case.template_origin[0] + p_mid * grid.plane_spacing)
                   / case.spacing[0]))
    iz = int(np.clip(iz, 0, case.dims[0] - 1))
    slice_mask = case.ptv_mask[iz].astype(bool)
    if not slice_mask.any():
        raise InitError("PTV does not cover the template mid-plane")
    edt = ndimage.distance_transform_edt(slice_mask, sampling=case.spacing[1:])
    return p_mid, iz, edt


def gen_needle_plan(case: AnatomyCase, grid: TemplateGrid = None,
                    ring_mm: float = 6.0) -> NeedlePlan:
    """Peripheral-weighted deterministic needle pattern.

    Takes mid-plane positions inside the PTV whose boundary distance is
    within ring_mm, skipping positions that already touch a selected
    face-neighbor (avoids dense clusters), plus a sparse interior grid.
    """
    grid = grid or TemplateGrid()
    from .annealing import _inside_ptv, _track_hits_urethra

    p_mid, iz, edt = _mid_plane_context(case, grid)
    occ = np.zeros((grid.n_eff_rows, grid.cols), np.uint8)
    for i in range(grid.n_eff_rows):
        for c in range(grid.cols):
            if not _inside_ptv(case, grid, i, c, p_mid):
                continue
            if _track_hits_urethra(case, grid, i, c):
                continue
            pos = grid.position_mm(grid.template_row(i), c, p_mid,
                                   case.template_origin)
            iy = int(round(pos[1] / case.spacing[1]))
            ix = int(round(pos[2] / case.spacing[2]))
            depth = edt[iy, ix]
            if depth <= ring_mm:
                clustered = any(
                    occ[i + di, c + dc]
                    for di, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
                    if 0 <= i + di < occ.shape[0] and 0 <= c + dc < occ.shape[1])
                if not clustered:
                    occ[i, c] = 1
            elif i % 2 == 0 and c % 2 == 0:
                occ[i, c] = 1
    if occ.sum() == 0:
        raise InitError("PTV admits no needle position")
    return NeedlePlan(grid, occ)


def gen_reference_plan(case: AnatomyCase, needles: NeedlePlan,
                       sa_config: SAConfig = None, cost_weights: CostWeights = None,
                       model=None, source_strength: float = 0.6):
    """init -> anneal -> fix_adjacent -> uniformize: the case's 'actual' plan.

    Returns (SeedPlan, NeedlePlan): needle_swap moves may relocate whole
    columns, so the needle plan paired with the result is the annealer's
    final working set, not necessarily the input pattern.
    """
    from .dosimetry import default_source_model

    sa_config = sa_config or default_sa_config()
    cost_weights = cost_weights or default_cost_weights()
    model = model or default_source_model()
    initial = init_from_needles(needles, case, source_strength)
    result = anneal(initial, case, model, sa_config, cost_weights, needles=needles)
    cleaned = fix_adjacent(result.plan)
    final = uniformize(cleaned, case, model, needles=result.needles).plan
    return final, result.needles


def _split_counts(n: int, fractions) -> tuple:
    f = [float(v) for v in fractions]
    if len(f) != 3 or abs(sum(f) - 1.0) > 1e-9 or any(v < 0 for v in f):
        raise ValidationError("split fractions must be three non-negatives summing to 1")
    base = [int(math.floor(n * v)) for v in f]
    remainders = [n * v - b for v, b in zip(f, base)]
    short = n - sum(base)
    order = sorted(range(3), key=lambda i: (-remainders[i], i))
    for i in range(short):
        base[order[i]] += 1
    return tuple(base)


def build_dataset(n_cases: int, split_fractions, out_dir, master_seed: int = 0,
                  sa_config: SAConfig = None, cost_weights: CostWeights = None,
                  model=None, volume_range=(20.0, 70.0),
                  source_strength: float = 0.6) -> Path:
    """Generate cases + reference plans, write files, return the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_train, n_val, n_test = _split_counts(n_cases, split_fractions)
    splits = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test

    rng = np.random.default_rng(master_seed)
    volumes = rng.uniform(volume_range[0], volume_range[1], size=n_cases)
    case_seeds = rng.integers(0, 2 ** 31 - 1, size=n_cases)

    entries = []
    for k in range(n_cases):
        case = gen_anatomy(int(case_seeds[k]), float(volumes[k]))
        case.case_id = f"case{k:04d}"
        needles = gen_needle_plan(case)
        plan, final_needles = gen_reference_plan(case, needles, sa_config,
                                                 cost_weights, model,
                                                 source_strength)
        case_path = write_case(case, out_dir, stem=case.case_id)
        needle_path = write_plan(out_dir / f"{case.case_id}_needles.plan.json",
                                 needles=final_needles, case_id=case.case_id)
        plan_path = write_plan(out_dir / f"{case.case_id}_ref.plan.json",
                               seeds=plan, needles=final_needles,
                               case_id=case.case_id)
        entries.append({
            "case_id": case.case_id,
            "case_file": case_path.name,
            "needle_file": needle_path.name,
            "plan_file": plan_path.name,
            "split": splits[k],
        })
    return write_manifest(out_dir / "manifest.json", entries, master_seed=master_seed,
                          augmented_train_samples=2 * n_train)
