from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from subgroup_audit.data import serialize
from subgroup_audit.synthetic import (Dataset1Params, Dataset2Params, cell_rate, f_age,
                                      gen_dataset1, gen_dataset2, gen_null)


def f_age_exact(rho, w, inside):
    rho, w = Fraction(rho), Fraction(w)
    return Fraction(1, 2) + rho * (72 - w) / 72 if inside else Fraction(1, 2) - rho * w / 72


def test_f_age_example():
    inside = f_age(np.array([50.0]), 0.2, 24.0)[0]
    outside = f_age(np.array([30.0]), 0.2, 24.0)[0]
    assert inside == pytest.approx(0.6333333333333333)
    assert outside == pytest.approx(0.4333333333333333)
    # boundaries: (42, 66]
    assert f_age(np.array([42.0, 66.0]), 0.2, 24.0).tolist() == pytest.approx([outside, inside])


@given(st.fractions(0, Fraction(49, 100)), st.fractions(Fraction(1, 10), Fraction(719, 10)))
def test_age_effect_averages_to_one_half_exactly(rho, w):
    # uniform age: P(inside) = w / 72
    mean = (w / 72) * f_age_exact(rho, w, True) + (1 - w / 72) * f_age_exact(rho, w, False)
    assert mean == Fraction(1, 2)


def test_normalizer_g():
    assert Dataset1Params().g == pytest.approx(0.47)
    p = Dataset1Params(race_probs=(1 / 3, 1 / 3, 1 / 3))
    assert p.g == pytest.approx(0.5)


def test_params_validation():
    with pytest.raises(ValueError):
        Dataset1Params(rho=0.5)
    with pytest.raises(ValueError):
        Dataset1Params(w=72)
    with pytest.raises(ValueError, match="outside"):
        Dataset1Params(rho=0.45, w=10)
    with pytest.raises(ValueError):
        Dataset1Params(race_probs=(0.5, 0.5))
    with pytest.raises(ValueError):
        Dataset2Params(rho=1.5)


def test_dataset1_shape_and_determinism():
    a = gen_dataset1(Dataset1Params(n=500, seed=3))
    b = gen_dataset1(Dataset1Params(n=500, seed=3))
    c = gen_dataset1(Dataset1Params(n=500, seed=4))
    assert a.attribute_names == ["age", "race", "gender"]
    assert serialize(a)[0] == serialize(b)[0]
    assert serialize(a)[0] != serialize(c)[0]
    age = a.values("age")
    assert age.min() >= 18 and age.max() <= 90


def test_dataset1_planted_rates():
    p = Dataset1Params(n=200_000, rho=0.3, w=24, seed=1)
    ds = gen_dataset1(p)
    age, race, y = ds.values("age"), ds.values("race"), ds.outcome_at()
    lo, hi = p.interval
    inside = (age > lo) & (age <= hi)
    for r, eff in enumerate((0.4, 0.5, 0.6)):
        for flag, f in ((True, p.f_age_inside), (False, p.f_age_outside)):
            sel = inside == flag
            sel &= race == r
            q = f * eff / p.g
            se = np.sqrt(q * (1 - q) / sel.sum())
            assert abs(y[sel].mean() - q) < 4 * se
    gender = ds.values("gender")
    assert np.bincount(race) / p.n == pytest.approx(p.race_probs, abs=0.01)
    assert np.bincount(gender) / p.n == pytest.approx(p.gender_probs, abs=0.01)


def test_dataset2_cell_rates():
    assert cell_rate([0, 0, 1, 1], [0, 1, 0, 1], 0.4).tolist() == pytest.approx([0.3, 0.7, 0.7, 0.3])
    assert cell_rate([0, 1], [1, 0], 0.0).tolist() == [0.5, 0.5]


def test_dataset2_shape_and_hidden_marginals():
    ds = gen_dataset2(Dataset2Params(n=100_000, rho=0.4, seed=2))
    assert ds.attribute_names == ["race", "gender", "age"]
    y = ds.outcome_at()
    se = np.sqrt(0.25 / 50_000)
    for name in ("race", "gender"):
        col = ds.values(name)
        for level in (0, 1):
            assert abs(y[col == level].mean() - 0.5) < 4 * se
    diag = ds.values("race") == ds.values("gender")
    assert y[diag].mean() == pytest.approx(0.3, abs=0.01)


def test_null_generator():
    ds = gen_null(n=1000, n_attributes=5, seed=1)
    assert ds.attribute_names == ["x1", "x2", "x3", "x4", "x5"]
    assert [a.kind for a in ds.schema] == ["continuous", "categorical"] * 2 + ["continuous"]
    assert abs(ds.outcome_at().mean() - 0.5) < 0.06
    with pytest.raises(ValueError):
        gen_null(n_attributes=0)
