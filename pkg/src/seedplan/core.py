"""Grid, plan, and anatomy data model.

Conventions used throughout the package:

- Volumes are numpy arrays indexed (z, y, x); physical spacing is mm per
  axis in the same order. Voxel (iz, iy, ix) has its center at
  (iz*dz, iy*dy, ix*dx) mm.
- The needle template is an 11x13 lattice of 5 mm pitch; a needle occupies
  a (row, col) position, a seed occupies (row, col, plane). Template grid
  point (r, c, p) maps to mm position template_origin + (p*plane_spacing,
  r*in_plane_spacing, c*in_plane_spacing) in (z, y, x) order.
- Occupancy arrays cover only non-excluded rows (effective shape 10x13 for
  needles, 10x13x14 for seeds with the defaults). TemplateGrid carries the
  mapping between effective row indices and physical template rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np


class ValidationError(ValueError):
    """Malformed input: bad shapes, non-binary masks, broken invariants."""


class CapacityError(ValidationError):
    """Anatomy does not fit the fixed plane capacity of the template."""


class UnsupportedGeometryError(ValidationError):
    """Grid geometry outside what an operation supports (e.g. even column count)."""


class RegistrationError(ValidationError):
    """Plan and anatomy cannot be registered to a common frame."""


class UndefinedMetricError(ValueError):
    """Metric is mathematically undefined for the given input (e.g. empty mask)."""


class CalibrationError(RuntimeError):
    """Source-strength calibration target unreachable within bounds."""


class InitError(RuntimeError):
    """Plan initialization failed (e.g. target volume admits no needle)."""


def _as_binary(arr, name: str) -> np.ndarray:
    a = np.asarray(arr)
    if a.dtype == bool:
        a = a.astype(np.uint8)
    vals = np.unique(a)
    if not np.isin(vals, (0, 1)).all():
        raise ValidationError(f"{name} must be binary, found values {vals[:8]}")
    return np.ascontiguousarray(a.astype(np.uint8))


@dataclass(frozen=True)
class TemplateGrid:
    """Physical needle-template lattice."""

    rows: int = 11
    cols: int = 13
    in_plane_spacing: float = 5.0
    plane_spacing: float = 5.0
    num_planes: int = 14
    excluded_rows: frozenset = frozenset({0})

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2 or self.num_planes < 1:
            raise ValidationError("grid needs rows >= 2, cols >= 2, num_planes >= 1")
        if self.in_plane_spacing <= 0 or self.plane_spacing <= 0:
            raise ValidationError("grid spacings must be positive")
        excl = frozenset(int(r) for r in self.excluded_rows)
        if any(r < 0 or r >= self.rows for r in excl):
            raise ValidationError(f"excluded_rows {sorted(excl)} outside [0, {self.rows})")
        if len(excl) >= self.rows:
            raise ValidationError("cannot exclude every row")
        object.__setattr__(self, "excluded_rows", excl)

    @property
    def effective_rows(self) -> tuple:
        """Physical template rows that may hold needles, ascending."""
        return tuple(r for r in range(self.rows) if r not in self.excluded_rows)

    @property
    def n_eff_rows(self) -> int:
        return self.rows - len(self.excluded_rows)

    def eff_index(self, template_row: int) -> int:
        try:
            return self.effective_rows.index(template_row)
        except ValueError:
            raise ValidationError(f"row {template_row} is excluded or out of range") from None

    def template_row(self, eff_index: int) -> int:
        return self.effective_rows[eff_index]

    def position_mm(self, template_row: int, col: int, plane: int, origin) -> np.ndarray:
        """Grid point -> (z, y, x) mm. origin is the case's template_origin."""
        oz, oy, ox = (float(v) for v in origin)
        return np.array([
            oz + plane * self.plane_spacing,
            oy + template_row * self.in_plane_spacing,
            ox + col * self.in_plane_spacing,
        ])


@dataclass
class NeedlePlan:
    """Binary needle occupancy over non-excluded template rows."""

    grid: TemplateGrid
    occupancy: np.ndarray  # (n_eff_rows, cols) uint8

    def __post_init__(self):
        self.occupancy = _as_binary(self.occupancy, "needle occupancy")
        want = (self.grid.n_eff_rows, self.grid.cols)
        if self.occupancy.shape != want:
            raise ValidationError(f"needle occupancy shape {self.occupancy.shape} != {want}")

    @classmethod
    def empty(cls, grid: TemplateGrid) -> "NeedlePlan":
        return cls(grid, np.zeros((grid.n_eff_rows, grid.cols), np.uint8))

    def needle_count(self) -> int:
        return int(self.occupancy.sum())

    def needle_list(self) -> list:
        """[(template_row, col)] ascending."""
        g = self.grid
        return [(g.template_row(i), int(c)) for i, c in zip(*np.nonzero(self.occupancy))]


@dataclass
class SeedPlan:
    """Binary seed occupancy over (effective row, col, plane)."""

    grid: TemplateGrid
    occupancy: np.ndarray  # (n_eff_rows, cols, num_planes) uint8
    source_strength: float = 0.6  # air-kerma strength per seed, U

    def __post_init__(self):
        self.occupancy = _as_binary(self.occupancy, "seed occupancy")
        want = (self.grid.n_eff_rows, self.grid.cols, self.grid.num_planes)
        if self.occupancy.shape != want:
            raise ValidationError(f"seed occupancy shape {self.occupancy.shape} != {want}")
        if self.source_strength <= 0:
            raise ValidationError("source_strength must be positive")

    @classmethod
    def empty(cls, grid: TemplateGrid, source_strength: float = 0.6) -> "SeedPlan":
        shape = (grid.n_eff_rows, grid.cols, grid.num_planes)
        return cls(grid, np.zeros(shape, np.uint8), source_strength)

    def seed_count(self) -> int:
        return int(self.occupancy.sum())

    def needle_footprint(self) -> np.ndarray:
        """(n_eff_rows, cols) uint8: columns holding at least one seed."""
        return (self.occupancy.sum(axis=2) > 0).astype(np.uint8)

    def seed_list(self) -> list:
        """[(template_row, col, plane)] ascending."""
        g = self.grid
        return [(g.template_row(i), int(c), int(p))
                for i, c, p in zip(*np.nonzero(self.occupancy))]

    def seed_positions_mm(self, origin) -> np.ndarray:
        """(n_seeds, 3) mm positions (z, y, x), seed index order."""
        seeds = self.seed_list()
        if not seeds:
            return np.zeros((0, 3))
        return np.stack([self.grid.position_mm(r, c, p, origin) for r, c, p in seeds])

    def copy(self) -> "SeedPlan":
        return SeedPlan(self.grid, self.occupancy.copy(), self.source_strength)


@dataclass
class ProbPlan:
    """Seed probabilities in [0, 1], same indexing as SeedPlan occupancy."""

    grid: TemplateGrid
    values: np.ndarray  # (n_eff_rows, cols, num_planes) float

    def __post_init__(self):
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        want = (self.grid.n_eff_rows, self.grid.cols, self.grid.num_planes)
        if self.values.shape != want:
            raise ValidationError(f"prob values shape {self.values.shape} != {want}")
        if not np.isfinite(self.values).all():
            raise ValidationError("prob values must be finite")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValidationError("prob values must lie in [0, 1]")


@dataclass
class AnatomyCase:
    """Co-registered binary masks on one voxel grid.

    template_origin is the (z, y, x) mm position of grid point (row 0,
    col 0, plane 0).
    """

    ptv_mask: np.ndarray
    ctv_mask: np.ndarray
    urethra_mask: np.ndarray
    rectum_mask: np.ndarray
    spacing: tuple  # (dz, dy, dx) mm
    template_origin: tuple  # (z, y, x) mm
    case_id: str = ""

    def __post_init__(self):
        self.ptv_mask = _as_binary(self.ptv_mask, "ptv_mask")
        self.ctv_mask = _as_binary(self.ctv_mask, "ctv_mask")
        self.urethra_mask = _as_binary(self.urethra_mask, "urethra_mask")
        self.rectum_mask = _as_binary(self.rectum_mask, "rectum_mask")
        dims = self.ptv_mask.shape
        if len(dims) != 3:
            raise ValidationError("masks must be 3D (z, y, x)")
        for name in ("ctv_mask", "urethra_mask", "rectum_mask"):
            if getattr(self, name).shape != dims:
                raise ValidationError(f"{name} shape {getattr(self, name).shape} != {dims}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValidationError("spacing must be three positive mm values")
        self.template_origin = tuple(float(v) for v in self.template_origin)
        if len(self.template_origin) != 3:
            raise ValidationError("template_origin must be (z, y, x) mm")
        if np.any(self.ctv_mask > self.ptv_mask):
            raise ValidationError("ctv_mask must be contained in ptv_mask")
        if np.any(self.urethra_mask > self.ctv_mask):
            raise ValidationError("urethra_mask must be contained in ctv_mask")
        if np.any(self.rectum_mask & self.ptv_mask):
            raise ValidationError("rectum_mask must not intersect ptv_mask")

    @property
    def dims(self) -> tuple:
        return self.ptv_mask.shape


@dataclass
class DoseGrid:
    """Absorbed dose (Gy) on an anatomy voxel grid."""

    values: np.ndarray  # (nz, ny, nx) float64
    spacing: tuple

    def __post_init__(self):
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 3:
            raise ValidationError("dose values must be 3D")
        if not np.isfinite(self.values).all() or self.values.min() < 0:
            raise ValidationError("dose must be finite and non-negative")
        self.spacing = tuple(float(s) for s in self.spacing)


@dataclass
class PlanValidationReport:
    """Report-only check of a seed plan against a needle plan."""

    off_needle: list = field(default_factory=list)  # [(template_row, col, plane)]
    excluded_row: list = field(default_factory=list)
    seed_count: int = 0
    needle_count: int = 0

    @property
    def ok(self) -> bool:
        return not self.off_needle and not self.excluded_row


def validate_plan(plan: SeedPlan, needles: NeedlePlan) -> PlanValidationReport:
    """Flag seeds with no needle at their (row, col) or in an excluded row."""
    if plan.grid != needles.grid:
        raise ValidationError("plan and needle plan use different grids")
    report = PlanValidationReport(
        seed_count=plan.seed_count(), needle_count=needles.needle_count()
    )
    # Effective-row arrays cannot hold excluded-row seeds by construction,
    # so that list stays empty unless occupancy was forged with a raw array
    # of the wrong convention; the check is kept for report completeness.
    for r, c, p in plan.seed_list():
        if r in plan.grid.excluded_rows:
            report.excluded_row.append((r, c, p))
        elif not needles.occupancy[plan.grid.eff_index(r), c]:
            report.off_needle.append((r, c, p))
    return report
