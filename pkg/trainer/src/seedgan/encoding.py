"""Input encoding on the trainer side: distance transforms, plane sampling,
resizing, and the vertical-split augmentation.

Follows the same recipe as the engine (max-normalized Euclidean distance
transforms, per-plane bilinear resize to 64x64, needle channel replicated
over planes, mirrored right half) but is implemented independently; only
the file formats are shared.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .formats import Case, Plan

INPUT_SIZE = 64


def distance_transform(mask, spacing) -> np.ndarray:
    m = np.asarray(mask).astype(bool)
    if not m.any():
        return np.zeros(m.shape)
    if m.all():
        return np.ones(m.shape)
    dt = ndimage.distance_transform_edt(m, sampling=spacing)
    return dt / dt.max()


def _resize_bilinear(img, out_shape):
    ny, nx = img.shape
    rr = np.linspace(0.0, ny - 1.0, out_shape[0])
    cc = np.linspace(0.0, nx - 1.0, out_shape[1])
    grid = np.meshgrid(rr, cc, indexing="ij")
    return ndimage.map_coordinates(np.asarray(img, np.float64), grid, order=1)


def encode_case(case: Case, plan: Plan) -> np.ndarray:
    """(64, 64, planes, 3) tensor: PTV-DT, CTV-DT, needle-DT channels."""
    planes = plan.planes
    out = np.zeros((INPUT_SIZE, INPUT_SIZE, planes, 3))
    for ch, mask in enumerate((case.ptv, case.ctv)):
        dt = distance_transform(mask, case.spacing)
        for p in range(planes):
            z_mm = case.template_origin[0] + p * plan.plane_spacing
            iz = int(round(z_mm / case.spacing[0]))
            if 0 <= iz < mask.shape[0]:
                out[:, :, p, ch] = _resize_bilinear(dt[iz], (INPUT_SIZE, INPUT_SIZE))
    full = np.zeros((plan.rows, plan.cols), np.uint8)
    for r, c in plan.needles:
        full[r, c] = 1
    ndt = distance_transform(full, (plan.in_plane_spacing, plan.in_plane_spacing))
    out[:, :, :, 2] = _resize_bilinear(ndt, (INPUT_SIZE, INPUT_SIZE))[:, :, None]
    return out


def split_halves(tensor: np.ndarray, plan_matrix: np.ndarray):
    """((left_t, left_p), (right_t, right_p)); right halves mirrored."""
    w = tensor.shape[1] // 2
    half = plan_matrix.shape[1] // 2
    left_t = np.ascontiguousarray(tensor[:, :w])
    right_t = np.ascontiguousarray(tensor[:, w:][:, ::-1])
    left_p = np.ascontiguousarray(plan_matrix[:, :half])
    right_p = np.ascontiguousarray(plan_matrix[:, half + 1:][:, ::-1])
    return (left_t, left_p), (right_t, right_p)


def merge_halves(left_p: np.ndarray, right_p: np.ndarray) -> np.ndarray:
    """Reassemble (rows, 2*half+1, planes); the center column stays empty."""
    rows, half, planes = left_p.shape
    out = np.zeros((rows, 2 * half + 1, planes), left_p.dtype)
    out[:, :half] = left_p
    out[:, half + 1:] = right_p[:, ::-1]
    return out


def to_torch_layout(tensor: np.ndarray) -> np.ndarray:
    """(H, W, D, C) -> (C, D, H, W) for conv3d."""
    return np.ascontiguousarray(tensor.transpose(3, 2, 0, 1))


def plan_to_torch_layout(plan_matrix: np.ndarray) -> np.ndarray:
    """(rows, cols, planes) -> (planes, rows, cols)."""
    return np.ascontiguousarray(plan_matrix.transpose(2, 0, 1))


def plan_from_torch_layout(arr: np.ndarray) -> np.ndarray:
    """(planes, rows, cols) -> (rows, cols, planes)."""
    return np.ascontiguousarray(arr.transpose(1, 2, 0))
