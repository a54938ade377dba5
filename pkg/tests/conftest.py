import numpy as np
import pytest

from seedplan.core import AnatomyCase, NeedlePlan, SeedPlan, TemplateGrid


def make_box_case(case_id="box", box=(10, 14, 14), dims=(24, 40, 40),
                  origin=(5.0, 2.0, 5.0)):
    """A hand-built case: PTV = CTV = a centered box, urethra = thin core,
    rectum = a posterior slab clear of the PTV."""
    nz, ny, nx = dims
    bz, by, bx = box
    ptv = np.zeros(dims, np.uint8)
    z0, y0, x0 = (nz - bz) // 2, (ny - by) // 2 - 4, (nx - bx) // 2
    ptv[z0:z0 + bz, y0:y0 + by, x0:x0 + bx] = 1
    ctv = ptv.copy()
    ure = np.zeros(dims, np.uint8)
    cy, cx = y0 + by // 2, x0 + bx // 2
    ure[z0:z0 + bz, cy - 1:cy + 1, cx - 1:cx + 1] = 1
    rec = np.zeros(dims, np.uint8)
    rec[z0:z0 + bz, y0 + by + 4:y0 + by + 10, x0:x0 + bx] = 1
    return AnatomyCase(ptv, ctv, ure, rec, spacing=(1.0, 1.0, 1.0),
                       template_origin=origin, case_id=case_id)


@pytest.fixture
def grid():
    return TemplateGrid()


@pytest.fixture
def box_case():
    return make_box_case()


def random_prob_values(rng, grid=None):
    g = grid or TemplateGrid()
    return rng.random((g.n_eff_rows, g.cols, g.num_planes))


def plan_from_seeds(grid, seeds, strength=0.6):
    """seeds: [(template_row, col, plane)]"""
    occ = np.zeros((grid.n_eff_rows, grid.cols, grid.num_planes), np.uint8)
    for r, c, p in seeds:
        occ[grid.eff_index(r), c, p] = 1
    return SeedPlan(grid, occ, strength)


def needles_from_list(grid, positions):
    occ = np.zeros((grid.n_eff_rows, grid.cols), np.uint8)
    for r, c in positions:
        occ[grid.eff_index(r), c] = 1
    return NeedlePlan(grid, occ)


def make_micro_case(box_lo=2, box_hi=9, case_id="micro"):
    """Tiny enumerable setup: a 2x2x2-slot template inside a cubic PTV.

    Grid points sit at mm 3 and 8 per axis; the PTV box [box_lo, box_hi]
    covers them all. Urethra is a thin central column clear of the grid
    columns; rectum is a posterior slab.
    """
    grid = TemplateGrid(rows=2, cols=2, num_planes=2,
                        excluded_rows=frozenset())
    dims = (12, 16, 12)
    ptv = np.zeros(dims, np.uint8)
    ptv[box_lo:box_hi + 1, box_lo:box_hi + 1, box_lo:box_hi + 1] = 1
    ctv = ptv.copy()
    ure = np.zeros(dims, np.uint8)
    ure[box_lo:box_hi + 1, 5:7, 5:7] = 1
    ure &= ctv
    rec = np.zeros(dims, np.uint8)
    rec[2:10, 12:14, 2:10] = 1
    case = AnatomyCase(ptv, ctv, ure, rec, spacing=(1.0, 1.0, 1.0),
                       template_origin=(3.0, 3.0, 3.0), case_id=case_id)
    return case, grid


def make_two_voxel_case():
    """PTV of exactly two voxels 10 mm apart along x; grid point on the first."""
    dims = (7, 8, 17)
    ptv = np.zeros(dims, np.uint8)
    ptv[3, 3, 3] = 1
    ptv[3, 3, 13] = 1
    ctv = ptv.copy()
    ure = np.zeros(dims, np.uint8)
    ure[3, 3, 3] = 1
    rec = np.zeros(dims, np.uint8)
    rec[3, 6, 3] = 1
    grid = TemplateGrid(rows=2, cols=2, num_planes=1, excluded_rows=frozenset())
    case = AnatomyCase(ptv, ctv, ure, rec, spacing=(1.0, 1.0, 1.0),
                       template_origin=(3.0, 3.0, 3.0), case_id="twovox")
    return case, grid
