"""Synthetic generators with planted disparities.

Dataset 1 plants a disparity on a middle age interval and on race.  Dataset 2
plants one that only shows up on race x gender cells: each attribute alone
has a 0.5 positive rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .data import AttributeSchema, AuditDataset, CATEGORICAL, CONTINUOUS

AGE_LOW, AGE_HIGH = 18.0, 90.0
AGE_SPAN = AGE_HIGH - AGE_LOW
AGE_CENTER = 54.0
RACE_EFFECT = (0.4, 0.5, 0.6)
RACES3 = ("r1", "r2", "r3")
GENDERS3 = ("g1", "g2", "g3")
RACES2 = ("r1", "r2")
GENDERS2 = ("g1", "g2")


def _check_probs(name, p, k):
    p = tuple(float(x) for x in p)
    if len(p) != k or any(x < 0 for x in p) or not math.isclose(sum(p), 1.0, abs_tol=1e-9):
        raise ValueError(f"{name} must be {k} non-negative probabilities summing to 1")
    return p


@dataclass(frozen=True)
class Dataset1Params:
    n: int = 10_000
    rho: float = 0.3
    w: float = 24.0
    race_probs: tuple = (0.5, 0.3, 0.2)
    gender_probs: tuple = (0.45, 0.45, 0.10)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 <= self.rho < 0.5:
            raise ValueError("rho must lie in [0, 0.5)")
        if not 0.0 < self.w < AGE_SPAN:
            raise ValueError("w must lie in (0, 72)")
        object.__setattr__(self, "race_probs", _check_probs("race_probs", self.race_probs, 3))
        object.__setattr__(self, "gender_probs", _check_probs("gender_probs", self.gender_probs, 3))
        q_max = self.f_age_inside * max(RACE_EFFECT) / self.g
        q_min = self.f_age_outside * min(RACE_EFFECT) / self.g
        if q_max > 1.0 or q_min < 0.0:
            raise ValueError(
                f"rho={self.rho}, w={self.w} give Bernoulli parameters outside [0, 1] "
                f"(max q = {q_max:.4f})")

    @property
    def interval(self):
        return AGE_CENTER - self.w / 2.0, AGE_CENTER + self.w / 2.0

    @property
    def f_age_inside(self):
        return 0.5 + self.rho * (AGE_SPAN - self.w) / AGE_SPAN

    @property
    def f_age_outside(self):
        return 0.5 - self.rho * self.w / AGE_SPAN

    @property
    def g(self):
        # E[f_age] = 0.5 and age is independent of race, so E[f_age f_race] / g = 0.5
        return sum(p * f for p, f in zip(self.race_probs, RACE_EFFECT))

    def to_json(self):
        return asdict(self)


@dataclass(frozen=True)
class Dataset2Params:
    n: int = 10_000
    rho: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")

    def to_json(self):
        return asdict(self)


def f_age(age, rho, w):
    lo, hi = AGE_CENTER - w / 2.0, AGE_CENTER + w / 2.0
    inside = (age > lo) & (age <= hi)
    return np.where(inside, 0.5 + rho * (AGE_SPAN - w) / AGE_SPAN, 0.5 - rho * w / AGE_SPAN)


def gen_dataset1(params: Dataset1Params = Dataset1Params()) -> AuditDataset:
    """Age, race and gender predictors; y depends on an age interval and race."""
    rng = np.random.default_rng([params.seed, 1])
    n = params.n
    age = rng.uniform(AGE_LOW, AGE_HIGH, n)
    race = rng.choice(3, size=n, p=params.race_probs)
    gender = rng.choice(3, size=n, p=params.gender_probs)
    q = f_age(age, params.rho, params.w) * np.asarray(RACE_EFFECT)[race] / params.g
    y = (rng.random(n) < q).astype(np.int8)
    schema = [
        AttributeSchema("age", CONTINUOUS),
        AttributeSchema("race", CATEGORICAL, RACES3),
        AttributeSchema("gender", CATEGORICAL, GENDERS3),
    ]
    return AuditDataset(schema, {"age": age, "race": race, "gender": gender}, y,
                        name=f"dataset1(rho={params.rho},w={params.w},seed={params.seed})")


def cell_rate(race, gender, rho):
    """Positive rate of a dataset-2 cell (codes 0/1)."""
    diagonal = np.asarray(race) == np.asarray(gender)
    return np.where(diagonal, 0.5 - rho / 2.0, 0.5 + rho / 2.0)


def gen_dataset2(params: Dataset2Params = Dataset2Params()) -> AuditDataset:
    """Race, gender and a decoy age; y depends only on the race x gender cell."""
    rng = np.random.default_rng([params.seed, 2])
    n = params.n
    race = rng.integers(0, 2, n)
    gender = rng.integers(0, 2, n)
    age = rng.uniform(AGE_LOW, AGE_HIGH, n)
    y = (rng.random(n) < cell_rate(race, gender, params.rho)).astype(np.int8)
    schema = [
        AttributeSchema("race", CATEGORICAL, RACES2),
        AttributeSchema("gender", CATEGORICAL, GENDERS2),
        AttributeSchema("age", CONTINUOUS),
    ]
    return AuditDataset(schema, {"race": race, "gender": gender, "age": age}, y,
                        name=f"dataset2(rho={params.rho},seed={params.seed})")


def gen_null(n=2000, n_attributes=5, seed=0, rate=0.5) -> AuditDataset:
    """Outcome independent of every attribute.

    Attributes alternate between continuous Uniform(0, 1) columns (even
    positions) and three-level categorical columns (odd positions).
    """
    if n_attributes < 1:
        raise ValueError("n_attributes must be >= 1")
    rng = np.random.default_rng([seed, 3])
    schema, columns = [], {}
    for k in range(n_attributes):
        name = f"x{k + 1}"
        if k % 2 == 0:
            schema.append(AttributeSchema(name, CONTINUOUS))
            columns[name] = rng.random(n)
        else:
            schema.append(AttributeSchema(name, CATEGORICAL, ("a", "b", "c")))
            columns[name] = rng.integers(0, 3, n)
    y = (rng.random(n) < rate).astype(np.int8)
    return AuditDataset(schema, columns, y, name=f"null(n={n},k={n_attributes},seed={seed})")
