import numpy as np
import pytest

from seedplan.annealing import SAConfig
from seedplan.core import ValidationError, validate_plan
from seedplan.dosimetry import default_source_model, plan_metrics
from seedplan.fileio import read_case, read_manifest, read_plan
from seedplan.losses import count_adjacent_pairs
from seedplan.phantom import (
    _split_counts,
    build_dataset,
    gen_anatomy,
    gen_needle_plan,
    gen_reference_plan,
)

FAST_SA = SAConfig(initial_temperature=1.0, cooling_rate=0.9,
                   iterations_per_temperature=50, min_temperature=1e-2,
                   rng_seed=0)


def test_volume_accuracy_within_two_percent():
    rng = np.random.default_rng(101)
    for _ in range(12):
        vol = float(rng.uniform(20.0, 70.0))
        case = gen_anatomy(int(rng.integers(1 << 30)), vol)
        measured = case.ctv_mask.sum() / 1000.0
        assert abs(measured - vol) / vol <= 0.02
    with pytest.raises(ValidationError):
        gen_anatomy(1, 10.0)
    with pytest.raises(ValidationError):
        gen_anatomy(1, 80.0)


def test_anatomy_invariants_random_seeds():
    rng = np.random.default_rng(103)
    for _ in range(25):
        case = gen_anatomy(int(rng.integers(1 << 30)),
                           float(rng.uniform(20, 70)))
        # constructor enforces ctv<=ptv, ure<=ctv, rec disjoint; spot checks:
        assert case.urethra_mask.sum() > 0
        assert case.rectum_mask.sum() > 0
        assert not np.any(case.rectum_mask & case.ptv_mask)
        # PTV spans at most the 14-plane capacity
        zs = np.nonzero(case.ptv_mask.any(axis=(1, 2)))[0]
        assert zs.max() - zs.min() <= 13 * 5


def test_anatomy_deterministic():
    a = gen_anatomy(7, 33.0)
    b = gen_anatomy(7, 33.0)
    for attr in ("ptv_mask", "ctv_mask", "urethra_mask", "rectum_mask"):
        assert np.array_equal(getattr(a, attr), getattr(b, attr))
    assert a.template_origin == b.template_origin


def test_needle_plan_envelope_and_geometry():
    counts = []
    for seed in range(8):
        case = gen_anatomy(200 + seed, 40.0)
        needles = gen_needle_plan(case)
        counts.append(needles.needle_count())
        # every needle track crosses the PTV, none crosses the urethra
        from seedplan.annealing import _inside_ptv, _track_hits_urethra

        for i, c in np.argwhere(needles.occupancy):
            assert any(_inside_ptv(case, needles.grid, int(i), int(c), p)
                       for p in range(14))
            assert not _track_hits_urethra(case, needles.grid, int(i), int(c))
    assert min(counts) >= 18 and max(counts) <= 32


def test_reference_plan_pipeline_contracts():
    case = gen_anatomy(301, 30.0)
    needles = gen_needle_plan(case)
    model = default_source_model()
    plan, final_needles = gen_reference_plan(case, needles, sa_config=FAST_SA,
                                             model=model)
    assert count_adjacent_pairs(plan) == 0
    assert validate_plan(plan, final_needles).ok
    assert final_needles.needle_count() >= plan.needle_footprint().sum()
    # deterministic under a fixed SA seed
    again, _ = gen_reference_plan(case, needles, sa_config=FAST_SA, model=model)
    assert np.array_equal(plan.occupancy, again.occupancy)


def test_split_counts_arithmetic():
    assert _split_counts(10, (0.7, 0.1, 0.2)) == (7, 1, 2)
    assert _split_counts(7, (0.7, 0.1, 0.2)) == (5, 1, 1)
    assert sum(_split_counts(961, (0.74, 0.104, 0.156))) == 961
    with pytest.raises(ValidationError):
        _split_counts(10, (0.5, 0.2, 0.2))


def test_build_dataset_files_and_determinism(tmp_path):
    out1 = tmp_path / "d1"
    out2 = tmp_path / "d2"
    m1 = build_dataset(4, (0.5, 0.25, 0.25), out1, master_seed=11,
                       sa_config=FAST_SA)
    m2 = build_dataset(4, (0.5, 0.25, 0.25), out2, master_seed=11,
                       sa_config=FAST_SA)
    doc = read_manifest(m1)
    assert [e["split"] for e in doc["cases"]] == ["train", "train", "val", "test"]
    assert doc["augmented_train_samples"] == 4
    model = default_source_model()
    for entry in doc["cases"]:
        case = read_case(out1 / entry["case_file"])
        needles = read_plan(out1 / entry["needle_file"]).needles
        plan = read_plan(out1 / entry["plan_file"]).seeds
        assert validate_plan(plan, needles).ok
        assert count_adjacent_pairs(plan) == 0
        row = plan_metrics(plan, case, model)
        assert 0 <= row.ptv_v100 <= 100
    assert m1.read_text() == m2.read_text()
    for entry in doc["cases"]:
        assert (out1 / entry["plan_file"]).read_text() == \
            (out2 / entry["plan_file"]).read_text()
