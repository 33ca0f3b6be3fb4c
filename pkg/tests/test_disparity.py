"""Disparity measures, chi-squared tests and BH correction against oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from subgroup_audit.data import Criterion, Metric, Predicate
from subgroup_audit.disparity import (OddsCounts, ParityCounts, Untestable, benjamini_hochberg,
                                      chi2_eo, chi2_sp, disparity_eo, disparity_sp,
                                      evaluate_candidates, fisher_combine, odds_counts,
                                      parity_counts)

from conftest import toy_dataset


def textbook_pearson(table):
    """Sum of (O - E)^2 / E over the cells, E from the margins."""
    rows = [sum(r) for r in table]
    cols = [sum(c) for c in zip(*table)]
    n = sum(rows)
    total = 0.0
    for i, r in enumerate(table):
        for j, o in enumerate(r):
            e = rows[i] * cols[j] / n
            total += (o - e) ** 2 / e
    return total


def test_chi2_sp_matches_textbook_on_random_tables():
    rng = np.random.default_rng(11)
    worst = 0.0
    checked = 0
    while checked < 20_000:
        a, b, c, d = (int(v) for v in rng.integers(0, 500, 4))
        if min(a + b, c + d, a + c, b + d) == 0:
            continue
        x, df, p = chi2_sp(ParityCounts(a, b, c, d))
        ref = textbook_pearson([[a, b], [c, d]])
        if ref > 0:
            worst = max(worst, abs(x - ref) / ref)
        else:
            assert x == pytest.approx(0.0, abs=1e-12)
        assert df == 1
        checked += 1
    assert worst <= 1e-10


def test_chi2_sp_matches_scipy_contingency():
    table = [[30, 70], [45, 55]]
    x, _, p = chi2_sp(ParityCounts(30, 70, 45, 55))
    ref = stats.chi2_contingency(table, correction=False)
    assert x == pytest.approx(ref.statistic, rel=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-12)


def test_degenerate_tables_are_untestable():
    with pytest.raises(Untestable):
        chi2_sp(ParityCounts(0, 0, 5, 5))
    with pytest.raises(Untestable):
        chi2_sp(ParityCounts(5, 0, 7, 0))
    with pytest.raises(Untestable):
        disparity_sp(ParityCounts(3, 4, 0, 0))


def test_chi2_eo_components_and_fisher():
    c = OddsCounts(fp_in=20, tn_in=80, fn_in=10, tp_in=90,
                   fp_out=50, tn_out=150, fn_out=60, tp_out=140)
    x, df, p, p_fpr, p_fnr = chi2_eo(c)
    ref_fpr = stats.chi2_contingency([[20, 80], [50, 150]], correction=False).pvalue
    ref_fnr = stats.chi2_contingency([[10, 90], [60, 140]], correction=False).pvalue
    assert p_fpr == pytest.approx(ref_fpr, rel=1e-10)
    assert p_fnr == pytest.approx(ref_fnr, rel=1e-10)
    fisher = -2.0 * (math.log(ref_fpr) + math.log(ref_fnr))
    assert x == pytest.approx(fisher, rel=1e-10)
    assert df == 4
    assert p == pytest.approx(stats.combine_pvalues([ref_fpr, ref_fnr], "fisher").pvalue,
                              rel=1e-10)


def test_fisher_floor_keeps_statistic_finite():
    x, df, p = fisher_combine([0.0, 0.5])
    assert math.isfinite(x) and df == 4 and p < 1e-250


def test_disparity_sp_example():
    # 30/100 inside vs 45/100 outside
    assert disparity_sp(ParityCounts(30, 70, 45, 55)) == pytest.approx(-0.15)


def test_disparity_eo_signs_and_magnitude():
    c = OddsCounts(fp_in=30, tn_in=70, fn_in=10, tp_in=90,
                   fp_out=10, tn_out=90, fn_out=30, tp_out=70)
    psi, d_fpr, d_fnr = disparity_eo(c)
    assert d_fpr == pytest.approx(0.2)
    assert d_fnr == pytest.approx(-0.2)
    assert psi == pytest.approx(0.2)


def test_counts_from_masks():
    y = np.array([1, 0, 1, 1, 0, 0])
    m = np.array([1, 1, 1, 0, 0, 0], dtype=bool)
    assert parity_counts(y, m) == ParityCounts(2, 1, 1, 2)
    err = np.array([1, 0, 1, 0, 1, 0])
    truth = np.array([0, 0, 1, 1, 0, 1])
    c = odds_counts(err, truth, m)
    assert (c.fp_in, c.tn_in, c.fn_in, c.tp_in) == (1, 1, 1, 0)
    assert (c.fp_out, c.tn_out, c.fn_out, c.tp_out) == (1, 0, 0, 2)


# ------------------------------------------------------------------------ BH
def bh_oracle(p):
    # q_i = min over p_j >= p_i of m p_j / rank_j, evaluated pairwise
    m = len(p)
    srt = sorted(p)
    rank = {v: k + 1 for k, v in enumerate(srt)}  # last position among ties
    return [min(1.0, min(m * v / rank[v] for v in srt if v >= pi)) for pi in p]


def test_bh_textbook_values():
    p = (0.005, 0.009, 0.05, 0.1, 0.2, 0.3)
    np.testing.assert_allclose(benjamini_hochberg(p), (0.027, 0.027, 0.1, 0.15, 0.24, 0.3))
    assert benjamini_hochberg([]) == []


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
def test_bh_matches_step_up_definition(p):
    ref = bh_oracle(p)
    np.testing.assert_allclose(benjamini_hochberg(p), ref, rtol=1e-12, atol=0)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
def test_bh_invariants(p):
    q = np.array(benjamini_hochberg(p))
    p = np.array(p)
    assert (q >= p - 1e-15).all() and (q <= 1.0).all()
    order = np.argsort(p, kind="stable")
    assert (np.diff(q[order]) >= -1e-15).all()


def test_bh_rejects_invalid():
    with pytest.raises(ValueError):
        benjamini_hochberg([0.2, 1.5])
    with pytest.raises(ValueError):
        benjamini_hochberg([float("nan")])


# --------------------------------------------------------------- candidates
def test_evaluate_candidates_flags_untestable_and_corrects():
    ds = toy_dataset(n=300, seed=4)
    rows = np.arange(ds.n_rows)
    cands = [Criterion.of(Predicate.one_of("color", ["blue"])),
             Criterion.of(Predicate.one_of("color", ["red", "green", "blue"])),
             Criterion.of(Predicate.interval("size", upper=5.0))]
    out = evaluate_candidates(cands, ds, rows, Metric.STATISTICAL_PARITY)
    assert [f.criterion for f in out] == cands
    assert not out[1].testable and out[1].reason and out[1].p_adjusted is None
    testable = [f for f in out if f.testable]
    ref = bh_oracle([f.p_raw for f in testable])
    for f, r in zip(testable, ref):
        assert f.p_adjusted == pytest.approx(max(r, f.p_raw))
        assert f.count == int(f.share * 300 + 0.5)
    assert out[0].psi > 0.15


def test_evaluate_candidates_eo_requires_truth():
    ds = toy_dataset(n=100)
    with pytest.raises(ValueError):
        evaluate_candidates([Criterion()], ds, np.arange(100), Metric.EQUALIZED_ODDS)


def test_evaluate_candidates_eo_fields():
    ds = toy_dataset(n=400, seed=2, with_truth=True)
    crit = Criterion.of(Predicate.one_of("color", ["blue"]))
    (f,) = evaluate_candidates([crit], ds, np.arange(400), "eo")
    assert f.df == 4
    assert f.psi == pytest.approx(0.5 * (abs(f.psi_fpr) + abs(f.psi_fnr)))
