"""Walkthrough: the template grid, plan containers, and input encoding.

Builds a synthetic case, encodes it into the stacked distance-transform
tensor, and shows the symmetry-based split/merge round trip.
"""

import numpy as np

from seedplan import TemplateGrid, augment_split, encode_input, merge_halves
from seedplan.phantom import gen_anatomy, gen_needle_plan

grid = TemplateGrid()
print(f"template: {grid.rows}x{grid.cols} holes at {grid.in_plane_spacing} mm, "
      f"{grid.num_planes} planes, excluded rows {sorted(grid.excluded_rows)}")
print(f"effective seed tensor shape: "
      f"{grid.n_eff_rows}x{grid.cols}x{grid.num_planes}")

case = gen_anatomy(rng_seed=1, volume_cc=40.0)
print(f"\ncase {case.case_id}: CTV {case.ctv_mask.sum() / 1000:.1f} cc, "
      f"PTV {case.ptv_mask.sum() / 1000:.1f} cc, dims {case.dims}")

needles = gen_needle_plan(case)
print(f"needle pattern: {needles.needle_count()} needles")

tensor = encode_input(case, needles)
print(f"\nencoded input tensor: {tensor.shape} "
      f"(channels: PTV-DT, CTV-DT, needle-DT)")
print(f"channel maxima: {[round(float(tensor[..., ch].max()), 3) for ch in range(3)]}")

from seedplan.annealing import init_from_needles

plan = init_from_needles(needles, case)
print(f"\nalternating-plane starting plan: {plan.seed_count()} seeds")

(left_t, left_p), (right_t, right_p) = augment_split(tensor, plan)
print(f"split halves: tensor {left_t.shape}, plan "
      f"{left_p.occupancy.shape} (mirrored right shares the orientation)")

merged = merge_halves(left_p, right_p, center=plan.occupancy[:, grid.cols // 2])
print(f"merge round trip exact: {np.array_equal(merged.occupancy, plan.occupancy)}")
