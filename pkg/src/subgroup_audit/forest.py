"""Candidate subgroup generation with a forest of randomized search trees."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import AuditDataset, Criterion, Metric, membership
from .splitting import SearchTree, TreeParams, grow_tree, terminal_criteria

# stream identifiers for seed derivation
_HALVES = 0
_TREES = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 25
    subsample_fraction: float = 0.632
    tree_params: TreeParams = field(default_factory=TreeParams)
    master_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise ValueError("subsample_fraction must lie in (0, 1]")

    @classmethod
    def single_tree(cls, tree_params: TreeParams | None = None, master_seed: int = 0):
        """One unrandomized conditional inference tree: all attributes at every
        node and the whole first half."""
        tp = tree_params or TreeParams()
        return cls(n_trees=1, subsample_fraction=1.0,
                   tree_params=replace(tp, mtry="all"), master_seed=master_seed)

    def to_json(self):
        return {
            "n_trees": self.n_trees,
            "subsample_fraction": self.subsample_fraction,
            "master_seed": self.master_seed,
            "tree_params": self.tree_params.to_json(),
        }


@dataclass
class Candidate:
    criterion: Criterion
    source_trees: tuple


@dataclass
class CandidateSet:
    subgroups: list
    d1: np.ndarray
    d2: np.ndarray
    params: ForestParams
    trees: list = field(default_factory=list)
    tree_seeds: list = field(default_factory=list)

    def __len__(self):
        return len(self.subgroups)

    def __iter__(self):
        return iter(self.subgroups)

    @property
    def criteria(self):
        return [c.criterion for c in self.subgroups]

    def to_json(self):
        return {
            "subgroups": [
                {"criterion": str(c.criterion), "criterion_structured": c.criterion.to_json(),
                 "source_trees": list(c.source_trees)}
                for c in self.subgroups
            ],
            "provenance": {
                "master_seed": self.params.master_seed,
                "tree_seeds": list(self.tree_seeds),
                "d1_rows": [int(i) for i in self.d1],
                "d2_rows": [int(i) for i in self.d2],
            },
            "params": self.params.to_json(),
        }


def split_halves(n_rows: int, seed: int, min_rows: int = 0):
    """Uniform random partition into (D1, D2) of sizes ceil(M/2), floor(M/2).

    Both index arrays are returned sorted.
    """
    if n_rows < max(2, min_rows):
        raise ValueError(f"dataset too small to split: {n_rows} rows, need {max(2, min_rows)}")
    perm = np.random.default_rng([seed, _HALVES]).permutation(n_rows)
    k = (n_rows + 1) // 2
    return np.sort(perm[:k]), np.sort(perm[k:])


def tree_seed(master_seed: int, index: int) -> int:
    """Per-tree seed from (master seed, tree index), independent of scheduling."""
    ss = np.random.SeedSequence([master_seed, _TREES, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


_WORKER_STATE = {}


def _init_worker(dataset, metric):
    _WORKER_STATE["dataset"] = dataset
    _WORKER_STATE["metric"] = metric


def _grow_one(job):
    index, rows, tp = job
    return grow_tree(rows, _WORKER_STATE["dataset"], tp, _WORKER_STATE["metric"], tree_id=index)


def _tree_jobs(d1, params: ForestParams):
    jobs = []
    size = int(math.floor(params.subsample_fraction * d1.size))
    for i in range(params.n_trees):
        seed = tree_seed(params.master_seed, i)
        rng = np.random.default_rng(seed)
        if size >= d1.size:
            rows = d1.copy()
        else:
            rows = np.sort(rng.choice(d1, size=size, replace=False))
        tp = replace(params.tree_params, rng_seed=int(rng.integers(0, 2 ** 63)))
        jobs.append((i, rows, tp))
    return jobs, [tree_seed(params.master_seed, i) for i in range(params.n_trees)]


def grow_forest(dataset: AuditDataset, d1, params: ForestParams, metric: Metric, workers: int = 1):
    """Grow ``params.n_trees`` trees on subsamples of ``d1``; returns (trees, seeds)."""
    jobs, seeds = _tree_jobs(np.asarray(d1), params)
    if workers <= 1 or len(jobs) <= 1:
        trees = [grow_tree(rows, dataset, tp, metric, tree_id=i) for i, rows, tp in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(dataset, metric)) as ex:
            trees = list(ex.map(_grow_one, jobs))
    return trees, seeds


def collect_candidates(trees, dataset: AuditDataset, d2, min_d2_size: int):
    """Canonical, deduplicated leaf criteria; drops the empty criterion and
    subgroups with fewer than ``min_d2_size`` held-out members."""
    sources: dict = {}
    for tree in trees:
        for crit in terminal_criteria(tree):
            if len(crit) == 0:
                continue
            sources.setdefault(crit, []).append(tree.tree_id)
    out = []
    for crit in sorted(sources, key=str):
        if np.count_nonzero(membership(crit, dataset, d2)) < min_d2_size:
            continue
        out.append(Candidate(crit, tuple(sorted(set(sources[crit])))))
    return out


def generate_subgroups(dataset: AuditDataset, params: ForestParams = ForestParams(),
                       metric: Metric = Metric.STATISTICAL_PARITY, halves=None,
                       workers: int = 1) -> CandidateSet:
    """Split into halves, grow the forest on D1 and return the candidate set."""
    metric = Metric.parse(metric)
    if metric.requires_truth and not dataset.has_truth:
        raise ValueError("equalized odds needs truth labels")
    if not dataset.sensitive_attributes:
        raise ValueError("at least one sensitive attribute is required")
    tp = params.tree_params
    if halves is None:
        halves = split_halves(dataset.n_rows, params.master_seed, 2 * tp.min_node_size)
    d1, d2 = (np.asarray(h) for h in halves)
    if math.floor(params.subsample_fraction * d1.size) < tp.min_node_size:
        raise ValueError("subsample of the first half is smaller than min_node_size")
    trees, seeds = grow_forest(dataset, d1, params, metric, workers)
    subgroups = collect_candidates(trees, dataset, d2, tp.min_leaf_size)
    return CandidateSet(subgroups, d1, d2, params, trees, seeds)
