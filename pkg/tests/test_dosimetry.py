import math

import numpy as np
import pytest

from seedplan.core import (
    CalibrationError,
    DoseGrid,
    RegistrationError,
    SeedPlan,
    TemplateGrid,
    UndefinedMetricError,
    ValidationError,
)
from seedplan.dosimetry import (
    MetricsRow,
    calibrate_strength,
    compute_dose,
    default_source_model,
    load_source_model,
    plan_metrics,
    seed_point_dose,
    unit_source_model,
    v_metric,
)
from conftest import make_box_case, plan_from_seeds


def test_inverse_square_ratio_exact():
    model = unit_source_model()
    d10 = seed_point_dose(10.0, 1.0, model)
    d20 = seed_point_dose(20.0, 1.0, model)
    assert d20 / d10 == 0.25


def test_hand_calculation_half_u_seed():
    # 0.5 U, Lambda 0.965, unit tables, half-life 59.4 d:
    # tau = 59.4*24/ln2 ~ 2056.6 h -> 0.5*0.965*2056.6 cGy ~ 9.923 Gy at 10 mm
    model = unit_source_model(dose_rate_constant=0.965, half_life_days=59.4)
    tau = 59.4 * 24 / math.log(2)
    want = 0.5 * 0.965 * tau / 100.0
    got = seed_point_dose(10.0, 0.5, model)
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(9.923, rel=0.005)


def test_cutoff_and_clamp():
    model = unit_source_model(cutoff_radius=50.0)
    assert seed_point_dose(50.1, 1.0, model) == 0.0
    assert seed_point_dose(0.0, 1.0, model) == seed_point_dose(0.5, 1.0, model)
    with pytest.raises(ValidationError):
        seed_point_dose(5.0, 0.0, model)
    with pytest.raises(ValidationError):
        seed_point_dose(-1.0, 1.0, model)


def test_default_model_tables_loaded():
    model = default_source_model()
    assert model.dose_rate_constant == 0.965
    assert model.half_life_days == 59.4
    assert model.g(10.0) == 1.0
    # endpoint clamping
    assert model.g(0.1) == model.g(1.0)
    assert model.g(500.0) == model.g(100.0)


def test_source_model_validation():
    with pytest.raises(ValidationError):
        unit_source_model(dose_rate_constant=-1)
    bad = np.array([[1.0, 1.0], [1.0, 1.0]])  # radii not strictly increasing
    from seedplan.dosimetry import SourceModel

    with pytest.raises(ValidationError):
        SourceModel("x", 1.0, 59.4, bad, bad.copy())


def test_compute_dose_empty_plan(box_case):
    model = unit_source_model()
    dose = compute_dose(SeedPlan.empty(TemplateGrid()), box_case, model)
    assert (dose.values == 0).all()


def test_compute_dose_linearity_in_strength(grid, box_case):
    model = unit_source_model()
    plan1 = plan_from_seeds(grid, [(4, 6, 1), (5, 5, 2)], strength=0.5)
    plan2 = plan_from_seeds(grid, [(4, 6, 1), (5, 5, 2)], strength=1.0)
    d1 = compute_dose(plan1, box_case, model)
    d2 = compute_dose(plan2, box_case, model)
    assert np.array_equal(d2.values, 2.0 * d1.values)


def test_superposition_matches_single_seed_sums(grid, box_case):
    model = default_source_model()
    seeds = [(4, 5, 1), (5, 6, 2), (6, 7, 3)]
    combined = compute_dose(plan_from_seeds(grid, seeds), box_case, model)
    acc = np.zeros(box_case.dims)
    for s in seeds:
        acc = acc + compute_dose(plan_from_seeds(grid, [s]), box_case, model).values
    assert np.array_equal(combined.values, acc)


def test_compute_dose_registration_error(grid):
    case = make_box_case(origin=(500.0, 500.0, 500.0))
    with pytest.raises(RegistrationError):
        compute_dose(SeedPlan.empty(grid), case, unit_source_model())


def brute_force_v(dose_values, mask, x, prescribed):
    thr = x / 100.0 * prescribed
    hits = total = 0
    nz, ny, nx = dose_values.shape
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                if mask[iz, iy, ix]:
                    total += 1
                    if dose_values[iz, iy, ix] >= thr:
                        hits += 1
    return 100.0 * hits / total


def test_v_metric_hand_fixture():
    vals = np.array([160.0, 150.0, 100.0, 90.0]).reshape(1, 1, 4)
    dose = DoseGrid(vals, (1, 1, 1))
    mask = np.ones((1, 1, 4), np.uint8)
    assert v_metric(dose, mask, 100, prescribed=144.0) == 50.0
    assert v_metric(dose, mask, 150, prescribed=144.0) == 0.0
    assert v_metric(dose, mask, 50, prescribed=144.0) == 100.0


def test_v_metric_bruteforce_and_scaling():
    rng = np.random.default_rng(21)
    for _ in range(25):
        vals = rng.random((4, 5, 6)) * 300.0
        mask = (rng.random((4, 5, 6)) < 0.5).astype(np.uint8)
        if not mask.any():
            mask[0, 0, 0] = 1
        dose = DoseGrid(vals, (1, 1, 1))
        x = float(rng.choice([50, 100, 150, 200]))
        got = v_metric(dose, mask, x, prescribed=144.0)
        assert got == brute_force_v(vals, mask, x, 144.0)
        # scale invariance
        c = float(rng.uniform(0.1, 5.0))
        scaled = DoseGrid(c * vals, (1, 1, 1))
        assert v_metric(scaled, mask, x, prescribed=c * 144.0) == pytest.approx(got)


def test_v_metric_empty_mask_error():
    dose = DoseGrid(np.zeros((2, 2, 2)), (1, 1, 1))
    with pytest.raises(UndefinedMetricError):
        v_metric(dose, np.zeros((2, 2, 2), np.uint8), 100)


def test_plan_metrics_empty_plan(grid, box_case):
    row = plan_metrics(SeedPlan.empty(grid), box_case, unit_source_model())
    assert row.ptv_v100 == 0.0 and row.rec_v50 == 0.0
    assert row.needles == 0 and row.seeds == 0


def test_plan_metrics_counts_and_permutation_invariance(grid, box_case):
    model = default_source_model()
    seeds = [(4, 6, 2), (4, 6, 5)]
    row = plan_metrics(plan_from_seeds(grid, seeds), box_case, model)
    assert row.needles == 1 and row.seeds == 2
    # same seeds listed in a different order builds the same occupancy
    row2 = plan_metrics(plan_from_seeds(grid, seeds[::-1]), box_case, model)
    assert row == row2


def test_plan_metrics_consistent_with_compute_dose(grid, box_case):
    model = default_source_model()
    plan = plan_from_seeds(grid, [(4, 6, 1), (5, 7, 2), (6, 5, 2)], strength=0.8)
    row = plan_metrics(plan, box_case, model)
    dose = compute_dose(plan, box_case, model)
    assert row.ptv_v100 == v_metric(dose, box_case.ptv_mask, 100)
    assert row.ure_v150 == v_metric(dose, box_case.urethra_mask, 150)
    assert row.rec_v50 == v_metric(dose, box_case.rectum_mask, 50)


def test_metrics_row_csv_roundtrip():
    row = MetricsRow(95.5, 50.1, 99.0, 60.2, 3.3, 17.0, needles=24, seeds=110,
                     plan_time=1.25)
    back = MetricsRow.from_csv_row(row.csv_row())
    assert back == row
    assert MetricsRow.CSV_HEADER.split(",")[0] == "PTV_V100"


def test_calibrate_strength_self_consistency(grid, box_case):
    model = default_source_model()
    seeds = [(r, c, p) for r in (3, 5, 7) for c in (5, 7) for p in (1, 3)]
    plan = plan_from_seeds(grid, seeds, strength=1.0)
    target = {"metric": "ctv_v100", "value": 90.0}
    s = calibrate_strength(box_case, plan, target, model)
    check = plan_from_seeds(grid, seeds, strength=s)
    row = plan_metrics(check, box_case, model)
    assert row.ctv_v100 == pytest.approx(90.0, abs=0.1)


def test_calibrate_lower_bound_and_unreachable(grid, box_case):
    model = default_source_model()
    plan = plan_from_seeds(grid, [(4, 6, 2)], strength=1.0)
    assert calibrate_strength(box_case, plan, {"metric": "ctv_v100", "value": 0.0},
                              model) == 0.01
    with pytest.raises(CalibrationError):
        calibrate_strength(box_case, plan, {"metric": "ctv_v100", "value": 100.0},
                           model, bounds=(0.01, 0.02))
    with pytest.raises(ValidationError):
        calibrate_strength(box_case, SeedPlan.empty(grid),
                           {"metric": "ctv_v100", "value": 90.0}, model)
