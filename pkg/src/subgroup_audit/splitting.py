"""Conditional inference trees grown by permutation-test splitting.

At every node a random subset of the sensitive attributes is drawn, each is
tested for independence from the outcome, the Bonferroni-adjusted minimum
p-value decides whether to split at all, and the winning attribute is split
at the cut with the largest standardized two-sample statistic.

For equalized-odds audits the permutation is blocked by the truth label, so
the test and the split statistic measure how error rates (FPR in the
``truth=0`` block, FNR in the ``truth=1`` block) depend on the attribute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special, stats

from . import kernels
from .data import AuditDataset, Criterion, Metric, Predicate
from .disparity import node_disparity


STOP_RULES = ("mincriterion", "significance")


@dataclass(frozen=True)
class TreeParams:
    alpha: float = 0.1
    min_node_size: int = 20
    min_leaf_size: int = 7
    max_depth: int | None = None
    mtry: int | str | None = None    # None: ceil(sqrt(K)); "all": every sensitive attribute
    rng_seed: int = 0
    max_bins: int = 10               # quantile bins for continuous attributes in the test
    mc_below: int = 30               # Monte-Carlo p-values for nodes smaller than this
    mc_permutations: int = 10_000
    max_exhaustive_levels: int = 6
    # "mincriterion": split while 1 - p_adj >= alpha (conditional-inference
    # forest convention); "significance": split only while p_adj <= alpha
    stop_rule: str = "mincriterion"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.min_leaf_size < 1:
            raise ValueError("min_leaf_size must be >= 1")
        if 2 * self.min_leaf_size > self.min_node_size:
            raise ValueError("min_node_size must be at least 2 * min_leaf_size")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.mtry is not None and self.mtry != "all" and (
                not isinstance(self.mtry, int) or self.mtry < 1):
            raise ValueError("mtry must be a positive integer, 'all' or None")
        if self.stop_rule not in STOP_RULES:
            raise ValueError(f"stop_rule must be one of {STOP_RULES}")

    def splits_at(self, p_adjusted: float) -> bool:
        if self.stop_rule == "significance":
            return p_adjusted <= self.alpha
        return p_adjusted <= 1.0 - self.alpha

    def resolved_mtry(self, n_sensitive: int) -> int:
        if self.mtry == "all":
            return n_sensitive
        m = self.mtry if self.mtry is not None else math.ceil(math.sqrt(n_sensitive))
        return max(1, min(m, n_sensitive))

    def to_json(self):
        return asdict(self)


@dataclass
class Split:
    attribute: str
    left: Predicate
    right: Predicate
    statistic: float
    p_value: float


@dataclass
class Node:
    id: int
    depth: int
    rows: np.ndarray
    criterion: Criterion
    parent: int | None = None
    split: Split | None = None
    children: tuple | None = None
    positives: int = 0
    psi: float | None = None

    @property
    def n(self) -> int:
        return int(self.rows.size)

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass
class SearchTree:
    nodes: list
    params: TreeParams
    metric: Metric
    tree_id: int = 0
    seed: int = 0
    attributes: tuple = field(default_factory=tuple)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def leaves(self):
        return [n for n in self.nodes if n.is_leaf]

    def structure(self):
        """Hashable summary used for determinism checks."""
        return tuple(
            (n.id, n.parent, n.depth, n.n, str(n.criterion),
             None if n.split is None else (n.split.attribute, str(n.split.left), str(n.split.right)))
            for n in self.nodes)

    def to_json(self):
        return {
            "tree_id": self.tree_id,
            "seed": self.seed,
            "nodes": [
                {
                    "id": n.id,
                    "parent": n.parent,
                    "depth": n.depth,
                    "criterion": str(n.criterion),
                    "criterion_structured": n.criterion.to_json(),
                    "n_train": n.n,
                    "split": None if n.split is None else {
                        "attribute": n.split.attribute,
                        "left": n.split.left.to_json(),
                        "right": n.split.right.to_json(),
                        "statistic": n.split.statistic,
                        "p_value": n.split.p_value,
                    },
                    "children": None if n.children is None else list(n.children),
                }
                for n in self.nodes
            ],
        }


# ------------------------------------------------------------------ response
def response(dataset: AuditDataset, rows, metric: Metric):
    """Outcome and permutation blocks for the rows of a tree.

    Returns ``(y, block, n_blocks)``.
    """
    y = dataset.outcome_at(rows).astype(np.int64)
    if Metric.parse(metric).requires_truth:
        return y, dataset.truth_at(rows).astype(np.int64), 2
    return y, np.zeros(y.size, dtype=np.int64), 1


def rank_bins(x, max_bins):
    """Quantile-bin codes of ``x`` (bins defined by order statistics only)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    xs = np.sort(x)
    cut = (np.arange(1, max_bins) * n) // max_bins
    edges = np.unique(xs[cut[cut < n]])
    edges = edges[edges < xs[-1]]
    return np.searchsorted(edges, x, side="left"), edges.size + 1


def _n_bins(n, max_bins):
    return int(min(max_bins, max(2, n // 10)))


def count_table(codes, n_groups, y, block, n_blocks):
    cell = codes * n_blocks + block
    size = n_groups * n_blocks
    n = np.bincount(cell, minlength=size).reshape(n_groups, n_blocks)
    s = np.bincount(cell, weights=y, minlength=size).round().astype(np.int64).reshape(n_groups, n_blocks)
    return n.astype(np.int64), s


def _outcome_constant(y, block, n_blocks):
    for b in range(n_blocks):
        yb = y[block == b]
        if yb.size >= 2 and 0 < yb.sum() < yb.size:
            return False
    return True


def _test_codes(values, is_categorical, n_levels, max_bins):
    """Group codes for the association test, or None if the attribute is constant."""
    if is_categorical:
        present = np.unique(values)
        if present.size < 2:
            return None
        remap = np.full(n_levels, -1, dtype=np.int64)
        remap[present] = np.arange(present.size)
        return remap[values], present.size
    if values.size == 0 or values.min() == values.max():
        return None
    return rank_bins(values, _n_bins(values.size, max_bins))


def attribute_association_logp(values, y, block=None, n_blocks=1, *, is_categorical=False,
                               n_levels=None, params: TreeParams = TreeParams(), rng=None,
                               mc_seed=None):
    """Natural log of the p-value of independence between one attribute and
    the binary outcome.

    Categorical attributes enter as one-hot level indicators, continuous ones
    as one-hot indicators of within-node quantile bins.  The quadratic form of
    the linear statistic is referred to chi-squared with ``df = rank``; nodes
    with fewer than ``params.mc_below`` rows use ``params.mc_permutations``
    within-block Monte-Carlo permutations instead, seeded by ``mc_seed``
    (drawn from ``rng`` when None).  Returns None for a constant attribute and 0.0 (p = 1)
    for a constant outcome.

    Working on the log scale keeps strongly associated attributes
    distinguishable after their p-values underflow.
    """
    values = np.asarray(values)
    y = np.asarray(y, dtype=np.int64)
    block = np.zeros(y.size, dtype=np.int64) if block is None else np.asarray(block, dtype=np.int64)
    if is_categorical and n_levels is None:
        n_levels = int(values.max()) + 1
    coded = _test_codes(values, is_categorical, n_levels, params.max_bins)
    if coded is None:
        return None
    if _outcome_constant(y, block, n_blocks):
        return 0.0
    codes, n_groups = coded
    n, s = count_table(codes, n_groups, y, block, n_blocks)
    stat, df = kernels.quadratic_stat(n, s)
    if df == 0:
        return 0.0
    if y.size < params.mc_below:
        if mc_seed is None:
            if rng is None:
                rng = np.random.default_rng(params.rng_seed)
            mc_seed = _draw_seed(rng)
        hits = kernels.mc_exceed(codes, n_groups, block, n_blocks, y, params.mc_permutations,
                                 mc_seed, stat)
        return math.log((1.0 + hits) / (1.0 + params.mc_permutations))
    return chi2_logsf(stat, df)


def chi2_logsf(stat, df):
    """log P(chi2_df > stat), finite even where the p-value underflows."""
    p = float(special.chdtrc(df, stat))
    if p > 1e-280:
        return min(0.0, math.log(p))
    lp = float(stats.chi2.logsf(stat, df))
    if math.isfinite(lp):
        return lp
    return _log_gammaincc_asymptotic(df / 2.0, stat / 2.0)


def _log_gammaincc_asymptotic(a, x):
    # log Q(a, x) = (a-1) log x - x - lgamma(a) + log(sum_k (a-1)...(a-k) / x^k)
    total, term = 1.0, 1.0
    for k in range(1, 60):
        nxt = term * (a - k) / x
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
            break
        term = nxt
        total += term
    return (a - 1.0) * math.log(x) - x - math.lgamma(a) + math.log(total)


def attribute_association_pvalue(values, y, block=None, n_blocks=1, **kwargs):
    """p-value form of :func:`attribute_association_logp`."""
    lp = attribute_association_logp(values, y, block, n_blocks, **kwargs)
    return None if lp is None else math.exp(lp)


def _draw_seed(rng):
    return int(rng.integers(0, 2 ** 63))


def select_split_attribute(columns, candidates, y, block, n_blocks, schema, params, rng):
    """Pick the attribute with the smallest Bonferroni-adjusted p-value.

    ``columns`` maps attribute name to node values.  Returns
    ``(attribute or None, adjusted p, raw log p-values)``; None when every
    candidate is constant or the adjusted p-value fails ``params.stop_rule``.
    Comparisons use log p-values; ties go to the smallest attribute name.
    """
    raw = {}
    # one permutation stream per node, shared by all drawn attributes
    mc_seed = _draw_seed(rng) if len(y) < params.mc_below else None
    for name in sorted(candidates):
        attr = schema[name]
        p = attribute_association_logp(
            columns[name], y, block, n_blocks, is_categorical=attr.is_categorical,
            n_levels=len(attr.levels) if attr.is_categorical else None, params=params, rng=rng,
            mc_seed=mc_seed)
        if p is not None:
            raw[name] = p
    if not raw:
        return None, 1.0, raw
    m = len(raw)
    best = min(sorted(raw), key=lambda k: raw[k])
    p_adj = math.exp(min(0.0, raw[best] + math.log(m)))
    if not params.splits_at(p_adj):
        return None, p_adj, raw
    return best, p_adj, raw


def best_binary_split(values, attr, y, block, n_blocks, params: TreeParams):
    """Best binary split of one attribute on the node rows.

    Returns ``(left Predicate, right Predicate, statistic)`` or None when no
    split leaves ``min_leaf_size`` rows on both sides.  Categorical right
    predicates hold all levels not sent left (including levels absent here).
    """
    values = np.asarray(values)
    y = np.asarray(y, dtype=np.int64)
    block = np.asarray(block, dtype=np.int64)
    min_leaf = params.min_leaf_size
    if not attr.is_categorical:
        uniq, inv = np.unique(values, return_inverse=True)
        if uniq.size < 2:
            return None
        n, s = count_table(inv.ravel(), uniq.size, y, block, n_blocks)
        k, stat = kernels.best_ordered_cut(n, s, min_leaf)
        if k < 0:
            return None
        thr = float((uniq[k] + uniq[k + 1]) / 2.0)
        if not uniq[k] <= thr < uniq[k + 1]:
            thr = float(uniq[k])
        return (Predicate.interval(attr.name, upper=thr),
                Predicate.interval(attr.name, lower=thr), stat)

    present = np.unique(values)
    if present.size < 2:
        return None
    remap = np.full(len(attr.levels), -1, dtype=np.int64)
    remap[present] = np.arange(present.size)
    n, s = count_table(remap[values], present.size, y, block, n_blocks)
    if present.size <= params.max_exhaustive_levels:
        mask, stat = kernels.best_subset(n, s, min_leaf)
        if mask == 0:
            return None
        left_codes = [int(present[i]) for i in range(present.size) if (mask >> i) & 1]
    else:
        nb = n.sum(axis=0)
        ybar = np.where(nb > 0, s.sum(axis=0) / np.maximum(nb, 1), 0.0)
        resid = (s - n * ybar).sum(axis=1) / n.sum(axis=1)
        order = np.lexsort((np.arange(present.size), resid))
        k, stat = kernels.best_ordered_cut(n[order], s[order], min_leaf)
        if k < 0:
            return None
        left_codes = sorted(int(present[i]) for i in order[:k + 1])
    left_levels = [attr.levels[c] for c in left_codes]
    right_levels = [l for l in attr.levels if l not in set(left_levels)]
    return (Predicate.one_of(attr.name, left_levels),
            Predicate.one_of(attr.name, right_levels), stat)


def grow_tree(rows, dataset: AuditDataset, params: TreeParams = TreeParams(),
              metric: Metric = Metric.STATISTICAL_PARITY, tree_id: int = 0) -> SearchTree:
    """Grow one randomized conditional inference tree on ``rows``.

    Per node: draw ``mtry`` sensitive attributes without replacement, select
    the split attribute by permutation test, split at the best cut, recurse.
    Stops on failed significance, ``min_node_size``, ``max_depth`` or when no
    legal split exists.
    """
    metric = Metric.parse(metric)
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    sensitive = sorted(dataset.sensitive_attributes)
    if not sensitive:
        raise ValueError("no sensitive attributes to split on")
    schema = {a.name: a for a in dataset.schema}
    mtry = params.resolved_mtry(len(sensitive))
    rng = np.random.default_rng(params.rng_seed)

    y_all, block_all, n_blocks = response(dataset, rows, metric)
    cols_all = {name: dataset.values(name, rows) for name in sensitive}
    truth_all = block_all if metric.requires_truth else None

    root = Node(0, 0, rows, Criterion(), positives=int(y_all.sum()))
    nodes = [root]
    local = {0: np.arange(rows.size)}
    positions = {}
    stack = [0]
    while stack:
        node = nodes[stack.pop()]
        idx = local.pop(node.id)
        if node.n < params.min_node_size:
            continue
        if params.max_depth is not None and node.depth >= params.max_depth:
            continue
        y = y_all[idx]
        block = block_all[idx]
        drawn = rng.choice(len(sensitive), size=mtry, replace=False)
        candidates = [sensitive[i] for i in sorted(drawn)]
        columns = {name: cols_all[name][idx] for name in candidates}
        best, p_adj, _ = select_split_attribute(columns, candidates, y, block, n_blocks,
                                                schema, params, rng)
        if best is None:
            continue
        split = best_binary_split(columns[best], schema[best], y, block, n_blocks, params)
        if split is None:
            continue
        left_pred, right_pred, stat = split
        vals = columns[best]
        if schema[best].is_categorical:
            codes = [i for i, l in enumerate(schema[best].levels) if l in left_pred.levels]
            go_left = np.isin(vals, codes)
        else:
            go_left = vals <= left_pred.upper
        node.split = Split(best, left_pred, right_pred, float(stat), float(p_adj))
        child_ids = []
        for side, pred in ((go_left, left_pred), (~go_left, right_pred)):
            cid = len(nodes)
            cidx = idx[side]
            nodes.append(Node(cid, node.depth + 1, rows[cidx], node.criterion.and_(pred),
                              parent=node.id, positives=int(y_all[cidx].sum())))
            local[cid] = cidx
            positions[cid] = cidx
            child_ids.append(cid)
        node.children = tuple(child_ids)
        stack.extend(reversed(child_ids))

    for node in nodes[1:]:
        mask = np.zeros(rows.size, dtype=bool)
        mask[positions[node.id]] = True
        node.psi = node_disparity(metric, y_all, truth_all, mask)
    return SearchTree(nodes, params, metric, tree_id=tree_id, seed=params.rng_seed,
                      attributes=tuple(sensitive))


def terminal_criteria(tree: SearchTree):
    """Criteria of the leaves in node order (root-only tree: ``[Criterion()]``)."""
    return [n.criterion for n in tree.leaves()]
