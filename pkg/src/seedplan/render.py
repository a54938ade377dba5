"""Axial plan renders: template crosses, seeds, structure contours, and the
100/150/200% isodose lines, written as deterministic SVG."""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .core import AnatomyCase, SeedPlan, ValidationError
from .dosimetry import PRESCRIBED_GY, compute_dose

STRUCTURE_STYLE = (
    ("ctv_mask", "#9b59d0", "CTV"),
    ("ptv_mask", "#18c5d8", "PTV"),
    ("urethra_mask", "#e8d034", "urethra"),
    ("rectum_mask", "#3a6fe0", "rectum"),
)
ISODOSE_STYLE = ((1.0, "#39c74f", "V100"), (1.5, "#f0f0f0", "V150"),
                 (2.0, "#e03b3b", "V200"))


def render_plan(plan: SeedPlan, case: AnatomyCase, plane: int, out_path, model,
                prescribed: float = PRESCRIBED_GY) -> Path:
    """Write one axial slice as SVG; byte-identical for identical inputs."""
    grid = plan.grid
    if not 0 <= plane < grid.num_planes:
        raise ValidationError(f"plane {plane} outside [0, {grid.num_planes})")
    iz = int(round((case.template_origin[0] + plane * grid.plane_spacing)
                   / case.spacing[0]))
    if not 0 <= iz < case.dims[0]:
        raise ValidationError(f"plane {plane} maps outside the case volume")

    plt.rcParams["svg.hashsalt"] = "seedplan-render"
    fig, ax = plt.subplots(figsize=(7, 6))
    ax.set_facecolor("#202020")

    ny, nx = case.dims[1], case.dims[2]
    extent_y = np.arange(ny) * case.spacing[1]
    extent_x = np.arange(nx) * case.spacing[2]

    dose = compute_dose(plan, case, model).values[iz]
    levels = [f * prescribed for f, _, _ in ISODOSE_STYLE]
    for (factor, color, label), level in zip(ISODOSE_STYLE, levels):
        if (dose >= level).any() and not (dose >= level).all():
            ax.contour(extent_x, extent_y, dose, levels=[level], colors=[color],
                       linewidths=1.2)
        ax.plot([], [], color=color, label=label)

    for attr, color, label in STRUCTURE_STYLE:
        mask = getattr(case, attr)[iz].astype(float)
        if mask.any() and not mask.all():
            ax.contour(extent_x, extent_y, mask, levels=[0.5], colors=[color],
                       linewidths=1.4)
        ax.plot([], [], color=color, label=label)

    for r in range(grid.rows):
        for c in range(grid.cols):
            pos = grid.position_mm(r, c, plane, case.template_origin)
            ax.plot(pos[2], pos[1], marker="+", color="#f2932a",
                    markersize=6, markeredgewidth=1.2)
    for r, c, p in plan.seed_list():
        if p == plane:
            pos = grid.position_mm(r, c, p, case.template_origin)
            ax.plot(pos[2], pos[1], marker="o", color="#f279c0", markersize=7)

    ax.set_xlim(0, (nx - 1) * case.spacing[2])
    ax.set_ylim((ny - 1) * case.spacing[1], 0)
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("y (mm)")
    ax.set_title(f"{case.case_id or 'case'} plane {plane}")
    ax.legend(loc="upper right", fontsize=8, framealpha=0.4)

    out_path = Path(out_path)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path
