"""Planning pipelines: initialization -> optional annealing -> cleanup ->
metrics, with wall time measured around the planning work only (no file
I/O happens inside)."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .annealing import (
    CostWeights,
    SAConfig,
    anneal,
    default_cost_weights,
    default_sa_config,
    init_from_needles,
    init_seattle,
)
from .core import AnatomyCase, NeedlePlan, ProbPlan, SeedPlan, ValidationError
from .dosimetry import PRESCRIBED_GY, MetricsRow, plan_metrics
from .phantom import gen_needle_plan
from .postprocess import binarize, fix_adjacent, uniformize

MODES = ("seattle+sa", "needles+sa", "plan-file", "plan-file+sa")


@dataclass
class PipelineResult:
    plan: SeedPlan
    needles: NeedlePlan
    metrics: MetricsRow
    trace: list = None
    truncated: bool = False
    mode: str = ""


def run_pipeline(case: AnatomyCase, mode: str, model, needles: NeedlePlan = None,
                 prob: ProbPlan = None, seeds: SeedPlan = None,
                 sa_config: SAConfig = None, cost_weights: CostWeights = None,
                 use_sa: bool = True, run_uniformize: bool = True,
                 bin_threshold: float = 0.5, source_strength: float = 0.6,
                 prescribed: float = PRESCRIBED_GY,
                 zero_time: bool = False) -> PipelineResult:
    """One case through the selected planning mode.

    plan-file modes take a ProbPlan (binarized against the needle plan) or a
    ready SeedPlan; --no-sa semantics are exposed via use_sa.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}, expected one of {MODES}")
    sa_config = sa_config or default_sa_config()
    cost_weights = cost_weights or default_cost_weights()

    t0 = time.perf_counter()
    trace = None
    truncated = False

    if mode == "seattle+sa":
        plan = init_seattle(case, source_strength=source_strength)
        needles = NeedlePlan(plan.grid, plan.needle_footprint())
    elif mode == "needles+sa":
        if needles is None:
            needles = gen_needle_plan(case)
        plan = init_from_needles(needles, case, source_strength)
    else:
        if seeds is not None:
            plan = seeds
            if needles is None:
                needles = NeedlePlan(plan.grid, plan.needle_footprint())
        elif prob is not None:
            if needles is None:
                raise ValidationError("plan-file mode with a ProbPlan needs a needle plan")
            plan = binarize(prob, needles, bin_threshold, source_strength)
        else:
            raise ValidationError("plan-file mode needs a seed or probability plan")

    sa_applies = use_sa and (mode.endswith("+sa") or mode in ("seattle+sa", "needles+sa"))
    if sa_applies:
        result = anneal(plan, case, model, sa_config, cost_weights, needles=needles,
                        prescribed=prescribed)
        plan = result.plan
        needles = result.needles
        trace = result.trace
        truncated = result.truncated

    plan = fix_adjacent(plan)
    if run_uniformize:
        plan = uniformize(plan, case, model, needles=needles,
                          prescribed=prescribed).plan

    metrics = plan_metrics(plan, case, model, prescribed)
    metrics.plan_time = 0.0 if zero_time else time.perf_counter() - t0
    return PipelineResult(plan, needles, metrics, trace, truncated, mode)
