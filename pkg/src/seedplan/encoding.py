"""Input encoding: weighted distance transforms, channel stacking, and the
vertical-split augmentation with its inverse.

The encoded input is a (64, 64, planes, 3) tensor; channels are the
distance-transformed PTV, CTV, and needle pattern. The needle channel is a
distance transform of the template-raster occupancy resized straight to the
output raster, matching how the 2D needle matrix is stacked with the resized
volumetric channels.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .core import (
    AnatomyCase,
    CapacityError,
    NeedlePlan,
    ProbPlan,
    SeedPlan,
    UnsupportedGeometryError,
    ValidationError,
    _as_binary,
)

INPUT_SIZE = 64


def distance_transform(mask, inside_weight: float = 1.0, spacing=None) -> np.ndarray:
    """Weighted, max-normalized Euclidean distance transform.

    Inside voxels map to inside_weight * (mm distance to nearest background)
    normalized by the volume-wide maximum inside distance; background maps
    to 0. An all-zero mask returns zeros.
    """
    m = _as_binary(mask, "mask")
    if inside_weight <= 0:
        raise ValidationError("inside_weight must be positive")
    if not m.any():
        return np.zeros(m.shape, np.float64)
    if m.all():
        # no background voxel exists; every voxel is at the (shared) maximum
        return np.full(m.shape, float(inside_weight))
    sampling = spacing if spacing is not None else (1.0,) * m.ndim
    dt = ndimage.distance_transform_edt(m, sampling=sampling)
    return dt * (float(inside_weight) / dt.max())


def resize_bilinear(img: np.ndarray, out_shape) -> np.ndarray:
    """Align-corners bilinear resize of a 2D image (for continuous fields)."""
    return _resample(np.asarray(img, np.float64), out_shape, order=1)


def resize_nearest(img: np.ndarray, out_shape) -> np.ndarray:
    """Nearest-neighbor resize of a 2D image (for categorical masks)."""
    return _resample(np.asarray(img, np.float64), out_shape, order=0)


def _resample(img, out_shape, order):
    ny, nx = img.shape
    oy, ox = out_shape
    rr = np.linspace(0.0, ny - 1.0, oy)
    cc = np.linspace(0.0, nx - 1.0, ox)
    grid = np.meshgrid(rr, cc, indexing="ij")
    return ndimage.map_coordinates(img, grid, order=order, mode="nearest")


def _plane_voxel_index(case: AnatomyCase, plane: int, grid) -> int:
    z_mm = case.template_origin[0] + plane * grid.plane_spacing
    return int(round(z_mm / case.spacing[0]))


def check_plane_capacity(case: AnatomyCase, grid) -> None:
    """Reject anatomies whose PTV spans more planes than the template holds."""
    zs = np.nonzero(case.ptv_mask.any(axis=(1, 2)))[0]
    if zs.size == 0:
        return
    dz = case.spacing[0]
    q = (zs * dz - case.template_origin[0]) / grid.plane_spacing
    first = int(np.floor(q.min() + 0.5))
    last = int(np.floor(q.max() + 0.5))
    if last - first + 1 > grid.num_planes:
        raise CapacityError(
            f"anatomy spans {last - first + 1} planes at "
            f"{grid.plane_spacing} mm; template holds {grid.num_planes}"
        )


def encode_input(case: AnatomyCase, needles: NeedlePlan,
                 inside_weight: float = 1.0) -> np.ndarray:
    """Stack distance-transformed PTV, CTV, and needle channels.

    Returns a (64, 64, num_planes, 3) float tensor. Anatomy slices are
    sampled at the template plane positions; planes outside the volume are
    zero (shorter anatomies are zero-padded).
    """
    grid = needles.grid
    check_plane_capacity(case, grid)

    out = np.zeros((INPUT_SIZE, INPUT_SIZE, grid.num_planes, 3))
    for ch, mask in enumerate((case.ptv_mask, case.ctv_mask)):
        dt = distance_transform(mask, inside_weight, spacing=case.spacing)
        for p in range(grid.num_planes):
            iz = _plane_voxel_index(case, p, grid)
            if 0 <= iz < mask.shape[0]:
                out[:, :, p, ch] = resize_bilinear(dt[iz], (INPUT_SIZE, INPUT_SIZE))

    # needle channel: template raster -> DT -> resize, replicated over planes
    full = np.zeros((grid.rows, grid.cols), np.uint8)
    for i, r in enumerate(grid.effective_rows):
        full[r] = needles.occupancy[i]
    ndt = distance_transform(full, inside_weight,
                             spacing=(grid.in_plane_spacing, grid.in_plane_spacing))
    needle_img = resize_bilinear(ndt, (INPUT_SIZE, INPUT_SIZE))
    out[:, :, :, 2] = needle_img[:, :, None]
    return out


def _plan_array(plan):
    return plan.values if isinstance(plan, ProbPlan) else plan.occupancy


def _make_plan_like(plan, grid, arr):
    if isinstance(plan, ProbPlan):
        return ProbPlan(grid, arr)
    return SeedPlan(grid, arr, plan.source_strength)


def _half_grid(grid):
    from dataclasses import replace

    return replace(grid, cols=grid.cols // 2)


def augment_split(tensor: np.ndarray, plan):
    """Split an encoded tensor and its plan around the template center column.

    Returns ((left_tensor, left_plan), (right_tensor, right_plan)). The right
    half is mirrored so both samples share one orientation; the center plan
    column is excluded from both halves (merge_halves restores it).
    """
    t = np.asarray(tensor)
    if t.ndim != 4 or t.shape[1] % 2 != 0:
        raise UnsupportedGeometryError(f"tensor width must be even, got {t.shape}")
    arr = _plan_array(plan)
    cols = arr.shape[1]
    if cols % 2 == 0:
        raise UnsupportedGeometryError(f"plan column count must be odd, got {cols}")
    half = cols // 2
    w = t.shape[1] // 2

    left_t = np.ascontiguousarray(t[:, :w])
    right_t = np.ascontiguousarray(t[:, w:][:, ::-1])
    hgrid = _half_grid(plan.grid)
    left_p = _make_plan_like(plan, hgrid, np.ascontiguousarray(arr[:, :half]))
    right_p = _make_plan_like(plan, hgrid, np.ascontiguousarray(arr[:, half + 1:][:, ::-1]))
    return (left_t, left_p), (right_t, right_p)


def merge_halves(left_plan, right_plan, center=None):
    """Reassemble a full-width plan from two mirrored halves.

    center: None fills the restored center column with zeros; otherwise an
    (n_eff_rows, num_planes) array supplies it explicitly.
    """
    if type(left_plan) is not type(right_plan):
        raise ValidationError("halves must be the same plan type")
    la, ra = _plan_array(left_plan), _plan_array(right_plan)
    if la.shape != ra.shape:
        raise ValidationError(f"half shapes differ: {la.shape} vs {ra.shape}")
    hgrid = left_plan.grid
    half = hgrid.cols
    from dataclasses import replace

    grid = replace(hgrid, cols=2 * half + 1)
    out = np.zeros((la.shape[0], grid.cols, la.shape[2]), la.dtype)
    out[:, :half] = la
    out[:, half + 1:] = ra[:, ::-1]
    if center is not None:
        center = np.asarray(center)
        if center.shape != (la.shape[0], la.shape[2]):
            raise ValidationError(
                f"center column shape {center.shape} != {(la.shape[0], la.shape[2])}"
            )
        out[:, half] = center
    return _make_plan_like(left_plan, grid, out)
