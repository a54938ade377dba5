"""Walkthrough: rendering an axial slice of a plan with structure contours
and the 100/150/200% isodose lines.

Writes demo_output/plan_plane*.svg.
"""

from pathlib import Path

from seedplan.annealing import SAConfig, anneal, default_cost_weights, init_from_needles
from seedplan.dosimetry import default_source_model
from seedplan.phantom import gen_anatomy, gen_needle_plan
from seedplan.postprocess import fix_adjacent
from seedplan.render import render_plan

out = Path("demo_output")
out.mkdir(exist_ok=True)

case = gen_anatomy(rng_seed=5, volume_cc=38.0)
needles = gen_needle_plan(case)
model = default_source_model()
sa = SAConfig(rng_seed=2, iterations_per_temperature=80, cooling_rate=0.9,
              min_temperature=1e-2)
result = anneal(init_from_needles(needles, case), case, model, sa,
                default_cost_weights(), needles=needles)
plan = fix_adjacent(result.plan)

per_plane = plan.occupancy.sum(axis=(0, 1))
busiest = int(per_plane.argmax())
for plane in (busiest - 1, busiest, busiest + 1):
    if 0 <= plane < plan.grid.num_planes:
        path = render_plan(plan, case, plane, out / f"plan_plane{plane}.svg", model)
        print(f"plane {plane}: {per_plane[plane]} seeds -> {path}")
