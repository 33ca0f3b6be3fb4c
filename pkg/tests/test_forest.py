import numpy as np
import pytest
from hypothesis import given, strategies as st

from subgroup_audit.data import AuditDataset, Metric, membership
from subgroup_audit.forest import (ForestParams, generate_subgroups, grow_forest, split_halves,
                                   tree_seed)
from subgroup_audit.splitting import TreeParams

from conftest import toy_dataset


@given(st.integers(2, 5000), st.integers(0, 2 ** 31))
def test_split_halves_partition(m, seed):
    d1, d2 = split_halves(m, seed)
    assert d1.size == (m + 1) // 2 and d2.size == m // 2
    assert np.intersect1d(d1, d2).size == 0
    assert np.union1d(d1, d2).size == m
    assert (np.diff(d1) > 0).all() and (np.diff(d2) > 0).all()


def test_split_halves_deterministic_and_seeded():
    a = split_halves(1000, 1)
    b = split_halves(1000, 1)
    c = split_halves(1000, 2)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])
    with pytest.raises(ValueError):
        split_halves(1, 0)
    with pytest.raises(ValueError):
        split_halves(30, 0, min_rows=40)


def test_tree_seeds_distinct_and_stable():
    seeds = [tree_seed(7, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert tree_seed(7, 3) == seeds[3]
    assert tree_seed(8, 3) != seeds[3]


def test_forest_params_validation():
    with pytest.raises(ValueError):
        ForestParams(n_trees=0)
    with pytest.raises(ValueError):
        ForestParams(subsample_fraction=1.5)
    single = ForestParams.single_tree()
    assert single.n_trees == 1 and single.subsample_fraction == 1.0
    assert single.tree_params.mtry == "all"


def test_candidates_are_canonical_deduplicated_and_sized():
    ds = toy_dataset(n=1200, seed=5)
    params = ForestParams(n_trees=10, master_seed=3)
    cs = generate_subgroups(ds, params)
    crits = cs.criteria
    assert len(set(crits)) == len(crits)
    assert [str(c) for c in crits] == sorted(str(c) for c in crits)
    for cand in cs:
        assert len(cand.criterion) > 0
        assert membership(cand.criterion, ds, cs.d2).sum() >= params.tree_params.min_leaf_size
        assert all(0 <= t < 10 for t in cand.source_trees)
        for t in cand.source_trees:
            leaves = [l.criterion for l in cs.trees[t].leaves()]
            assert cand.criterion in leaves
    assert len(cs.tree_seeds) == 10


def test_forest_subsamples_first_half_only():
    ds = toy_dataset(n=800, seed=6)
    d1, d2 = split_halves(800, 0)
    trees, _ = grow_forest(ds, d1, ForestParams(n_trees=5), Metric.STATISTICAL_PARITY)
    expected = int(0.632 * d1.size)
    for t in trees:
        assert t.root.n == expected
        assert np.isin(t.root.rows, d1).all()


class RecordingDataset(AuditDataset):
    """Logs every row index the search reads."""

    def __init__(self, base):
        cols = {n: base.values(n) for n in base.attribute_names}
        truth = base.truth_at() if base.has_truth else None
        super().__init__(base.schema, cols, base.outcome_at(), truth, base.name)
        self.seen = set()

    def _log(self, rows):
        rows = np.arange(self.n_rows) if rows is None else np.asarray(rows)
        self.seen.update(int(r) for r in rows)

    def values(self, name, rows=None):
        self._log(rows)
        return super().values(name, rows)

    def outcome_at(self, rows=None):
        self._log(rows)
        return super().outcome_at(rows)

    def truth_at(self, rows=None):
        self._log(rows)
        return super().truth_at(rows)


@pytest.mark.parametrize("metric", ["sp", "eo"])
def test_search_never_reads_the_held_out_half(metric):
    ds = RecordingDataset(toy_dataset(n=600, seed=7, with_truth=True))
    d1, d2 = split_halves(600, 0)
    grow_forest(ds, d1, ForestParams(n_trees=6), Metric.parse(metric))
    assert ds.seen and ds.seen <= set(d1.tolist())


def test_held_out_outcomes_do_not_change_the_search():
    base = toy_dataset(n=800, seed=8)
    d1, d2 = split_halves(800, 0)
    y = base.outcome_at().copy()
    y[d2] = 1 - y[d2]
    flipped = AuditDataset(base.schema, {n: base.values(n) for n in base.attribute_names}, y)
    params = ForestParams(n_trees=6)
    a = generate_subgroups(base, params)
    b = generate_subgroups(flipped, params)
    assert [t.structure() for t in a.trees] == [t.structure() for t in b.trees]
    assert a.criteria == b.criteria


def test_workers_do_not_change_results():
    ds = toy_dataset(n=600, seed=9)
    params = ForestParams(n_trees=6, master_seed=4)
    a = generate_subgroups(ds, params, workers=1)
    b = generate_subgroups(ds, params, workers=3)
    assert [t.structure() for t in a.trees] == [t.structure() for t in b.trees]
    assert a.criteria == b.criteria


def test_generate_subgroups_errors():
    ds = toy_dataset(n=600)
    with pytest.raises(ValueError):
        generate_subgroups(ds, metric=Metric.EQUALIZED_ODDS)
    with pytest.raises(ValueError):
        generate_subgroups(toy_dataset(n=50))
    with pytest.raises(ValueError):
        generate_subgroups(ds.with_sensitive([]))


def test_single_tree_uses_whole_first_half():
    ds = toy_dataset(n=600, seed=10)
    cs = generate_subgroups(ds, ForestParams.single_tree(TreeParams()))
    assert len(cs.trees) == 1
    assert cs.trees[0].root.n == cs.d1.size
