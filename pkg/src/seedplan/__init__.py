"""Template-based LDR prostate brachytherapy planning toolkit."""

from .core import (
    AnatomyCase,
    DoseGrid,
    NeedlePlan,
    ProbPlan,
    SeedPlan,
    TemplateGrid,
    validate_plan,
)
from .encoding import augment_split, distance_transform, encode_input, merge_halves
from .dosimetry import (
    MetricsRow,
    SourceModel,
    calibrate_strength,
    compute_dose,
    default_source_model,
    plan_metrics,
    seed_point_dose,
    v_metric,
)
from .losses import (
    AdjKernel,
    LossWeights,
    adj_seed_loss,
    adversarial_loss,
    compare_plans,
    count_adjacent_pairs,
    l1_loss,
    total_objective,
)
from .annealing import (
    AnnealResult,
    CostWeights,
    SAConfig,
    anneal,
    cost,
    init_from_needles,
    init_seattle,
)
from .postprocess import binarize, fix_adjacent, uniformize
from .phantom import build_dataset, gen_anatomy, gen_needle_plan, gen_reference_plan
from .pipeline import PipelineResult, run_pipeline
from .stats import paired_t_test

__version__ = "0.1.0"
