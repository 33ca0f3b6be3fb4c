import csv
import io
import math

import pytest
from hypothesis import given, strategies as st

from subgroup_audit.benchmark import (CSV_COLUMNS, BenchmarkConfig, GroundTruth, dataset1_truth,
                                      dataset2_truth, locate_success, matches, run_benchmark,
                                      run_seed, to_csv)
from subgroup_audit.data import Criterion, Predicate, parse_criterion
from subgroup_audit.disparity import Finding
from subgroup_audit.pipeline import AuditConfig
from subgroup_audit.synthetic import Dataset1Params

TRUTH1 = dataset1_truth(Dataset1Params(w=24))


def as_findings(*texts):
    return [Finding(parse_criterion(t), 10, 0.1, psi=0.2, p_adjusted=0.001) for t in texts]


def test_tolerance_arithmetic():
    assert locate_success(as_findings("age > 41.1 AND age <= 66.9"), TRUTH1)
    assert not locate_success(as_findings("age > 38.3 AND age <= 66.0"), TRUTH1)


def test_decoy_predictor_fails():
    assert not locate_success(as_findings('age > 42.5 AND age <= 65.0 AND gender in {g2}'),
                              TRUTH1)


def test_race_involvement_is_allowed_and_trackable():
    f = as_findings("age > 42 AND age <= 66 AND race in {r3}")
    assert locate_success(f, TRUTH1)
    assert locate_success(f, dataset1_truth(Dataset1Params(), ("race",)))
    assert not locate_success(as_findings("age > 42 AND age <= 66"),
                              dataset1_truth(Dataset1Params(), ("race",)))


def test_infinite_bound_matches_range_end():
    truth = GroundTruth(frozenset({"age"}), frozenset({"age"}), {"age": (60.0, 90.0)},
                        {"age": (18.0, 90.0)})
    assert locate_success(as_findings("age > 61.0"), truth)


def test_only_top_n_groups_count():
    fs = as_findings("gender in {g1}", "gender in {g2}", "gender in {g3}",
                     "age > 42 AND age <= 66")
    assert not locate_success(fs, TRUTH1, n_groups=3)
    assert locate_success(fs, TRUTH1, n_groups=4)


def test_dataset2_cells():
    t = dataset2_truth()
    assert locate_success(as_findings("race in {r1} AND gender in {g1}"), t)
    assert not locate_success(as_findings("race in {r1}"), t)
    assert not locate_success(as_findings("race in {r1} AND gender in {g1} AND age > 30"), t)
    assert not locate_success(as_findings("race in {r1,r2} AND gender in {g1}"), t)


def test_interval_distance_mode():
    f = as_findings("age > 38.0 AND age <= 66.0")[0].criterion
    assert not matches(f, TRUTH1)
    assert matches(f, TRUTH1, interval_distance=True)


def test_ground_truth_from_json():
    t = GroundTruth.from_json({"attributes": ["age"], "intervals": {"age": [42, 66]},
                               "ranges": {"age": [18, 90]}})
    assert locate_success(as_findings("age > 42.2 AND age <= 65.9"), t)


@given(st.floats(18, 90), st.floats(18, 90), st.floats(0.001, 0.2), st.floats(0.0, 0.3))
def test_locate_success_monotone_in_tolerance(a, b, t, extra):
    lo, hi = min(a, b), max(a, b)
    if hi - lo < 1e-6:
        return
    fs = [Finding(Criterion.of(Predicate.interval("age", lo, hi)), 1, 0.1)]
    if locate_success(fs, TRUTH1, tolerance=t):
        assert locate_success(fs, TRUTH1, tolerance=t + extra)


def test_config_validation():
    with pytest.raises(ValueError):
        BenchmarkConfig(runs=0)
    with pytest.raises(ValueError):
        BenchmarkConfig(tolerance=0)
    with pytest.raises(ValueError):
        BenchmarkConfig(variant="cart")
    with pytest.raises(ValueError):
        BenchmarkConfig(grid=({"rho": 0.45, "w": 10},))


def test_run_seeds_are_schedule_independent():
    assert run_seed(0, 1, 2) == run_seed(0, 1, 2)
    assert len({run_seed(0, c, r) for c in range(5) for r in range(20)}) == 100


def test_small_benchmark_csv_and_workers():
    cfg = BenchmarkConfig(generator="dataset2", grid=({"rho": 0.0}, {"rho": 0.4}), runs=3,
                          n=1500, audit=AuditConfig(n_trees=5))
    rows = run_benchmark(cfg)
    text = to_csv(rows)
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert list(parsed[0]) == list(CSV_COLUMNS)
    assert len(parsed) == 2
    for r in parsed:
        rate = float(r["success_rate"])
        assert 0 <= rate <= 1
        assert float(r["stderr"]) == pytest.approx(math.sqrt(rate * (1 - rate) / 3), abs=1e-6)
    assert float(parsed[1]["success_rate"]) >= float(parsed[0]["success_rate"])
    par = run_benchmark(BenchmarkConfig(**{**cfg.__dict__, "workers": 2}))
    assert to_csv(par) == text
