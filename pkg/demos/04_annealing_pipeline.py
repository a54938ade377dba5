"""Walkthrough: simulated-annealing fine-tuning and the cleanup stages.

Runs the needles -> alternating seeds -> SA -> fix-adjacent -> uniformize
pipeline on one phantom and prints the metric improvements stage by stage.
A reduced SA budget keeps this demo around half a minute.
"""

import time

from seedplan import cost, plan_metrics
from seedplan.annealing import (
    SAConfig,
    anneal,
    default_cost_weights,
    init_from_needles,
)
from seedplan.dosimetry import default_source_model
from seedplan.losses import count_adjacent_pairs
from seedplan.phantom import gen_anatomy, gen_needle_plan
from seedplan.postprocess import fix_adjacent, uniformize

case = gen_anatomy(rng_seed=11, volume_cc=45.0)
needles = gen_needle_plan(case)
model = default_source_model()
cw = default_cost_weights()
sa = SAConfig(rng_seed=1, iterations_per_temperature=100, cooling_rate=0.92,
              min_temperature=5e-3)


def show(tag, plan):
    row = plan_metrics(plan, case, model)
    print(f"{tag:<12} PTV V100 {row.ptv_v100:6.2f}%  V150 {row.ptv_v150:5.1f}%  "
          f"URE V150 {row.ure_v150:5.2f}%  REC V50 {row.rec_v50:5.2f}%  "
          f"N {row.needles:2d}  S {row.seeds:3d}  "
          f"pairs {count_adjacent_pairs(plan)}")


initial = init_from_needles(needles, case, source_strength=0.6)
show("initial", initial)
print(f"{'':12} initial cost {cost(initial, case, model, cw):.2f}")

t0 = time.perf_counter()
result = anneal(initial, case, model, sa, cw, needles=needles)
print(f"\nSA: {result.iterations} iterations in {time.perf_counter() - t0:.1f} s, "
      f"best cost {result.best_cost:.3f}")
show("annealed", result.plan)

cleaned = fix_adjacent(result.plan)
show("fixed", cleaned)

uni = uniformize(cleaned, case, model, needles=result.needles)
show("uniformized", uni.plan)
print(f"\nuniformize moved {uni.moves} seed(s); guard blocked: {uni.blocked}")

accept_rate = sum(r[4] for r in result.trace) / len(result.trace)
print(f"acceptance rate over the run: {accept_rate:.2%}")
