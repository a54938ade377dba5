import numpy as np
import pytest

from seedplan.core import ProbPlan, SeedPlan, TemplateGrid, ValidationError, validate_plan
from seedplan.dosimetry import plan_metrics, unit_source_model
from seedplan.losses import count_adjacent_pairs
from seedplan.postprocess import binarize, fix_adjacent, uniformize
from conftest import make_box_case, needles_from_list, plan_from_seeds


def test_binarize_rules(grid):
    needles = needles_from_list(grid, [(4, 6)])
    values = np.zeros((10, 13, 14))
    values[grid.eff_index(4), 6, 3] = 0.9   # on needle -> seed
    values[grid.eff_index(4), 7, 3] = 0.9   # off needle -> no seed
    values[grid.eff_index(4), 6, 5] = 0.4   # below threshold -> no seed
    plan = binarize(ProbPlan(grid, values), needles)
    assert plan.seed_list() == [(4, 6, 3)]
    empty = binarize(ProbPlan(grid, np.full((10, 13, 14), 0.2)), needles)
    assert empty.seed_count() == 0
    # exact threshold is inclusive
    values2 = np.zeros((10, 13, 14))
    values2[grid.eff_index(4), 6, 0] = 0.5
    assert binarize(ProbPlan(grid, values2), needles).seed_count() == 1


def test_fix_adjacent_identity_when_clean(grid):
    plan = plan_from_seeds(grid, [(2, 3, 1), (2, 3, 3), (5, 7, 1)])
    fixed = fix_adjacent(plan)
    assert np.array_equal(fixed.occupancy, plan.occupancy)


def test_fix_adjacent_relocates_and_preserves_count(grid):
    # consecutive planes 4,5: later seed moves to 6, the nearest legal slot
    plan = plan_from_seeds(grid, [(2, 3, 4), (2, 3, 5)])
    fixed = fix_adjacent(plan)
    assert count_adjacent_pairs(fixed) == 0
    assert fixed.seed_count() == 2
    assert fixed.occupancy[fixed.grid.eff_index(2), 3, 4] == 1
    assert fixed.occupancy[fixed.grid.eff_index(2), 3, 6] == 1


def test_fix_adjacent_skips_blocked_neighbors(grid):
    # seeds at 4,5,7: slots 3,5,6,8 would re-create adjacency, so the later
    # seed of the (4,5) pair lands on the free plane two steps below 4
    plan = plan_from_seeds(grid, [(2, 3, 4), (2, 3, 5), (2, 3, 7)])
    fixed = fix_adjacent(plan)
    assert count_adjacent_pairs(fixed) == 0
    assert fixed.seed_count() == 3
    assert sorted(p for _, _, p in fixed.seed_list()) == [2, 4, 7]


def test_fix_adjacent_removes_on_saturated_needle():
    grid = TemplateGrid(rows=3, cols=2, num_planes=2, excluded_rows=frozenset())
    # both planes of one needle occupied, nowhere to go on that needle
    plan = plan_from_seeds(grid, [(0, 0, 0), (0, 0, 1)])
    fixed = fix_adjacent(plan)
    assert count_adjacent_pairs(fixed) == 0
    assert fixed.seed_count() == 1
    # the later seed of the pair is the one removed
    assert fixed.occupancy[0, 0, 0] == 1


def test_fix_adjacent_random_plans_clean_and_idempotent(grid):
    rng = np.random.default_rng(71)
    needles = needles_from_list(grid, [(r, c) for r in range(1, 11)
                                       for c in range(13)])
    for _ in range(200):
        occ = (rng.random((10, 13, 14)) < 0.12).astype(np.uint8)
        plan = SeedPlan(grid, occ)
        fixed = fix_adjacent(plan)
        assert count_adjacent_pairs(fixed) == 0
        assert fixed.seed_count() <= plan.seed_count()
        again = fix_adjacent(fixed)
        assert np.array_equal(again.occupancy, fixed.occupancy)
        assert validate_plan(fixed, needles).ok
        # never moves a seed off its own needle column
        assert np.all(fixed.needle_footprint() <= plan.needle_footprint())


def _uniform_setup():
    case = make_box_case()
    model = unit_source_model()
    grid = TemplateGrid()
    return case, model, grid


def test_uniformize_requires_adjacency_free():
    case, model, grid = _uniform_setup()
    plan = plan_from_seeds(grid, [(3, 3, 1), (3, 3, 2)])
    with pytest.raises(ValidationError):
        uniformize(plan, case, model)


def test_uniformize_already_uniform_unchanged():
    case, model, grid = _uniform_setup()
    # box case PTV covers template planes 1 and 2 only
    plan = plan_from_seeds(grid, [(2, 2, 1), (2, 4, 2)], strength=0.4)
    out = uniformize(plan, case, model)
    assert out.moves == 0 and not out.blocked
    assert np.array_equal(out.plan.occupancy, plan.occupancy)


def test_uniformize_reduces_spread_and_stays_clean():
    case, model, grid = _uniform_setup()
    # plane 1 loaded with 6 seeds, plane 2 with 2: spread 4
    seeds_p1 = [(2, 2, 1), (2, 4, 1), (2, 6, 1), (4, 2, 1), (4, 4, 1), (4, 6, 1)]
    seeds_p2 = [(6, 2, 2), (6, 4, 2)]
    plan = plan_from_seeds(grid, seeds_p1 + seeds_p2, strength=0.05)
    needles = needles_from_list(grid, sorted({(r, c) for r, c, _ in seeds_p1 + seeds_p2}))
    before = {p: int(plan.occupancy[:, :, p].sum()) for p in (1, 2)}
    out = uniformize(plan, case, model, needles=needles)
    after = {p: int(out.plan.occupancy[:, :, p].sum()) for p in (1, 2)}
    spread_before = max(before.values()) - min(before.values())
    spread_after = max(after.values()) - min(after.values())
    assert spread_after <= spread_before
    assert count_adjacent_pairs(out.plan) == 0
    assert out.plan.seed_count() == plan.seed_count()
    assert out.moves > 0
    # with weak seeds the V100 guard is inert at 0%, so spread reaches tolerance
    assert spread_after <= 1


def test_uniformize_guard_blocks_coverage_losing_move():
    case, model, grid = _uniform_setup()
    # strength chosen so coverage is marginal: moving any plane-1 seed to
    # plane 2 uncovers plane-1-adjacent PTV voxels
    seeds_p1 = [(2, 2, 1), (2, 4, 1), (2, 6, 1), (4, 2, 1), (4, 4, 1), (4, 6, 1)]
    seeds_p2 = [(6, 4, 2)]
    plan = plan_from_seeds(grid, seeds_p1 + seeds_p2, strength=0.028)
    row = plan_metrics(plan, case, model)
    assert 0.0 < row.ptv_v100 < 100.0
    out = uniformize(plan, case, model, tolerance=0)
    if out.blocked:
        # counts unchanged on the blocked attempt tail
        assert out.plan.seed_count() == plan.seed_count()
    v_after = plan_metrics(out.plan, case, model).ptv_v100
    assert v_after >= row.ptv_v100 - 1e-12


def test_uniformize_idempotent_at_fixed_tolerance():
    case, model, grid = _uniform_setup()
    seeds = [(2, 2, 1), (2, 4, 1), (2, 6, 1), (4, 2, 1), (6, 2, 2)]
    plan = plan_from_seeds(grid, seeds, strength=0.05)
    first = uniformize(plan, case, model)
    second = uniformize(first.plan, case, model)
    assert np.array_equal(second.plan.occupancy, first.plan.occupancy)
    assert second.moves == 0
