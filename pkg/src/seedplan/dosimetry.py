"""Permanent-implant dose computation and dose-volume metrics.

Point-source formalism with tabulated radial dose and anisotropy factors:

    rate(r) = strength * Lambda * (10 mm / r)^2 * g(r) * phi_an(r)   [cGy/h]
    dose    = rate(r) * tau,  tau = half_life * 24 / ln 2            [hours]

Radii below 0.5 mm clamp to 0.5 mm; radii beyond the cutoff contribute
nothing; table lookups interpolate linearly and clamp at the endpoints.
Doses accumulate in float64 at voxel centers, seeds in index order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    AnatomyCase,
    CalibrationError,
    DoseGrid,
    RegistrationError,
    SeedPlan,
    UndefinedMetricError,
    ValidationError,
)

PRESCRIBED_GY = 144.0
REFERENCE_RADIUS_MM = 10.0
MIN_RADIUS_MM = 0.5


@dataclass
class SourceModel:
    """Tabulated point-source parameterization of one seed type."""

    name: str
    dose_rate_constant: float  # cGy / (h U)
    half_life_days: float
    radial_dose_table: np.ndarray  # (n, 2): radius mm, g(r)
    anisotropy_table: np.ndarray   # (n, 2): radius mm, phi_an(r)
    cutoff_radius: float = 100.0

    def __post_init__(self):
        if self.dose_rate_constant <= 0 or self.half_life_days <= 0:
            raise ValidationError("dose_rate_constant and half_life must be positive")
        for attr in ("radial_dose_table", "anisotropy_table"):
            tab = np.asarray(getattr(self, attr), np.float64)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 1:
                raise ValidationError(f"{attr} must be (n, 2)")
            if np.any(np.diff(tab[:, 0]) <= 0):
                raise ValidationError(f"{attr} radii must be strictly increasing")
            if np.any(tab[:, 1] <= 0):
                raise ValidationError(f"{attr} values must be positive")
            setattr(self, attr, tab)
        if self.cutoff_radius <= 0:
            raise ValidationError("cutoff_radius must be positive")

    @property
    def tau_hours(self) -> float:
        """Integrated time-to-complete-decay factor."""
        return self.half_life_days * 24.0 / math.log(2.0)

    def g(self, r_mm):
        t = self.radial_dose_table
        return np.interp(r_mm, t[:, 0], t[:, 1])

    def phi(self, r_mm):
        t = self.anisotropy_table
        return np.interp(r_mm, t[:, 0], t[:, 1])


def load_source_model(path) -> SourceModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ValidationError(f"{path}: unreadable source model ({exc})") from None
    try:
        return SourceModel(
            name=doc.get("name", "unnamed"),
            dose_rate_constant=float(doc["lambda_cGy_per_hU"]),
            half_life_days=float(doc["half_life_days"]),
            radial_dose_table=np.asarray(doc["g_table"], np.float64),
            anisotropy_table=np.asarray(doc["phi_table"], np.float64),
            cutoff_radius=float(doc.get("cutoff_mm", 100.0)),
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: missing source model field {exc}") from None


def default_source_model() -> SourceModel:
    ref = resources.files("seedplan.data") / "i125_default.json"
    with resources.as_file(ref) as path:
        return load_source_model(path)


def unit_source_model(dose_rate_constant: float = 1.0, half_life_days: float = 59.4,
                      cutoff_radius: float = 1e6) -> SourceModel:
    """g = phi_an = 1 everywhere: pure inverse-square, for oracles and tests."""
    flat = np.array([[0.1, 1.0], [1e6, 1.0]])
    return SourceModel("unit", dose_rate_constant, half_life_days,
                       flat, flat.copy(), cutoff_radius)


def seed_point_dose(distance_mm, strength: float, model: SourceModel):
    """Total absorbed dose (Gy) at a radial distance from one seed.

    Accepts a scalar or array of distances.
    """
    if strength <= 0:
        raise ValidationError("source strength must be positive")
    r = np.asarray(distance_mm, np.float64)
    if np.any(r < 0):
        raise ValidationError("distance must be non-negative")
    beyond = r > model.cutoff_radius
    rc = np.maximum(r, MIN_RADIUS_MM)
    rate = (strength * model.dose_rate_constant
            * (REFERENCE_RADIUS_MM / rc) ** 2 * model.g(rc) * model.phi(rc))
    dose_gy = rate * model.tau_hours / 100.0
    dose_gy = np.where(beyond, 0.0, dose_gy)
    return float(dose_gy) if np.isscalar(distance_mm) else dose_gy


def _check_registration(plan: SeedPlan, case: AnatomyCase):
    g = plan.grid
    lo = g.position_mm(0, 0, 0, case.template_origin)
    hi = g.position_mm(g.rows - 1, g.cols - 1, g.num_planes - 1, case.template_origin)
    vol_hi = [(n - 1) * s for n, s in zip(case.dims, case.spacing)]
    if np.any(np.maximum(lo, 0) > np.minimum(hi, vol_hi)):
        raise RegistrationError(
            f"template box {lo}..{hi} mm does not intersect case volume 0..{vol_hi} mm"
        )


def dose_at_points(points_mm: np.ndarray, seed_positions_mm: np.ndarray,
                   strength: float, model: SourceModel) -> np.ndarray:
    """Superposed dose (Gy) at arbitrary mm points, seeds in index order."""
    pts = np.asarray(points_mm, np.float64)
    out = np.zeros(len(pts))
    for s in np.asarray(seed_positions_mm, np.float64):
        r = np.sqrt(((pts - s) ** 2).sum(axis=1))
        out += seed_point_dose(r, strength, model)
    return out


def compute_dose(plan: SeedPlan, case: AnatomyCase, model: SourceModel) -> DoseGrid:
    """Superposition of per-seed point doses over every voxel center."""
    _check_registration(plan, case)
    nz, ny, nx = case.dims
    dz, dy, dx = case.spacing
    zz = np.arange(nz) * dz
    yy = np.arange(ny) * dy
    xx = np.arange(nx) * dx
    values = np.zeros((nz, ny, nx))
    for sz, sy, sx in plan.seed_positions_mm(case.template_origin):
        r = np.sqrt(((zz - sz) ** 2)[:, None, None]
                    + ((yy - sy) ** 2)[None, :, None]
                    + ((xx - sx) ** 2)[None, None, :])
        values += seed_point_dose(r, plan.source_strength, model)
    return DoseGrid(values, case.spacing)


def v_metric(dose: DoseGrid, mask, x_percent: float,
             prescribed: float = PRESCRIBED_GY) -> float:
    """Percent of mask voxels receiving at least x% of the prescribed dose."""
    m = np.asarray(mask).astype(bool)
    if m.shape != dose.values.shape:
        raise ValidationError(f"mask shape {m.shape} != dose shape {dose.values.shape}")
    n = int(m.sum())
    if n == 0:
        raise UndefinedMetricError("V metric undefined for an empty mask")
    threshold = (x_percent / 100.0) * prescribed
    return 100.0 * int((dose.values[m] >= threshold).sum()) / n


def _v_from_vector(dose_vec: np.ndarray, x_percent: float, prescribed: float) -> float:
    if dose_vec.size == 0:
        raise UndefinedMetricError("V metric undefined for an empty mask")
    threshold = (x_percent / 100.0) * prescribed
    return 100.0 * int((dose_vec >= threshold).sum()) / dose_vec.size


@dataclass
class MetricsRow:
    """One plan's quality metrics, in report column order."""

    ptv_v100: float = 0.0
    ptv_v150: float = 0.0
    ctv_v100: float = 0.0
    ctv_v150: float = 0.0
    ure_v150: float = 0.0
    rec_v50: float = 0.0
    needles: int = 0
    seeds: int = 0
    plan_time: float = 0.0

    CSV_HEADER = "PTV_V100,PTV_V150,CTV_V100,CTV_V150,URE_V150,REC_V50,N_needles,N_seeds,plan_time_s"

    def __post_init__(self):
        for name in ("ptv_v100", "ptv_v150", "ctv_v100", "ctv_v150", "ure_v150", "rec_v50"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValidationError(f"{name}={v} outside [0, 100]")
        if self.needles < 0 or self.seeds < 0:
            raise ValidationError("counts must be non-negative")

    def csv_row(self) -> str:
        return (f"{self.ptv_v100:.6f},{self.ptv_v150:.6f},{self.ctv_v100:.6f},"
                f"{self.ctv_v150:.6f},{self.ure_v150:.6f},{self.rec_v50:.6f},"
                f"{self.needles},{self.seeds},{self.plan_time:.6f}")

    @classmethod
    def from_csv_row(cls, line: str) -> "MetricsRow":
        parts = line.strip().split(",")
        if len(parts) != 9:
            raise ValidationError(f"metrics row needs 9 fields, got {len(parts)}")
        vals = [float(p) for p in parts]
        return cls(*vals[:6], needles=int(vals[6]), seeds=int(vals[7]), plan_time=vals[8])


def mask_points_mm(mask: np.ndarray, spacing) -> np.ndarray:
    """(n, 3) mm center coordinates of a mask's voxels, C-scan order."""
    idx = np.argwhere(np.asarray(mask).astype(bool))
    return idx * np.asarray(spacing, np.float64)


def plan_metrics(plan: SeedPlan, case: AnatomyCase, model: SourceModel,
                 prescribed: float = PRESCRIBED_GY) -> MetricsRow:
    """All Table-style metrics for one plan. plan_time is left at 0."""
    _check_registration(plan, case)
    seeds_mm = plan.seed_positions_mm(case.template_origin)

    def v_of(mask, x):
        pts = mask_points_mm(mask, case.spacing)
        if len(pts) == 0:
            raise UndefinedMetricError("V metric undefined for an empty mask")
        vec = dose_at_points(pts, seeds_mm, plan.source_strength, model)
        return _v_from_vector(vec, x, prescribed)

    return MetricsRow(
        ptv_v100=v_of(case.ptv_mask, 100),
        ptv_v150=v_of(case.ptv_mask, 150),
        ctv_v100=v_of(case.ctv_mask, 100),
        ctv_v150=v_of(case.ctv_mask, 150),
        ure_v150=v_of(case.urethra_mask, 150),
        rec_v50=v_of(case.rectum_mask, 50),
        needles=int(plan.needle_footprint().sum()),
        seeds=plan.seed_count(),
    )


_METRIC_SPECS = {
    "ptv_v100": ("ptv_mask", 100.0),
    "ptv_v150": ("ptv_mask", 150.0),
    "ctv_v100": ("ctv_mask", 100.0),
    "ctv_v150": ("ctv_mask", 150.0),
    "ure_v150": ("urethra_mask", 150.0),
    "rec_v50": ("rectum_mask", 50.0),
}


def calibrate_strength(case: AnatomyCase, plan: SeedPlan, target: dict,
                       model: SourceModel, prescribed: float = PRESCRIBED_GY,
                       bounds=(0.01, 10.0), tol: float = 0.1,
                       max_iter: int = 40) -> float:
    """Seed strength (U) reaching target = {"metric": name, "value": percent}.

    Dose is linear in strength and V metrics are monotone in dose, so a
    bisection on a single unit-strength dose vector suffices.
    """
    if plan.seed_count() == 0:
        raise ValidationError("cannot calibrate an empty plan")
    name = target["metric"]
    if name not in _METRIC_SPECS:
        raise ValidationError(f"unknown metric {name!r}")
    goal = float(target["value"])
    mask_attr, x = _METRIC_SPECS[name]
    pts = mask_points_mm(getattr(case, mask_attr), case.spacing)
    if len(pts) == 0:
        raise UndefinedMetricError(f"{name} undefined: empty structure")
    base = dose_at_points(pts, plan.seed_positions_mm(case.template_origin), 1.0, model)

    def f(s):
        return _v_from_vector(s * base, x, prescribed)

    lo, hi = bounds
    if f(lo) >= goal:
        return lo
    if f(hi) < goal:
        raise CalibrationError(
            f"{name} reaches only {f(hi):.2f}% at {hi} U, target {goal}%"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if abs(f(mid) - goal) <= tol:
            return mid
        if f(mid) >= goal:
            hi = mid
        else:
            lo = mid
    return hi
