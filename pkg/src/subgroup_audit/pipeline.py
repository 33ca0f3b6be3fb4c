"""End-to-end audit: halves, forest, held-out tests, ranking, report."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, asdict, replace

from . import __version__
from .data import AuditDataset, Metric
from .disparity import evaluate_candidates
from .forest import ForestParams, generate_subgroups
from .report import (METHODOLOGY, AuditReport, RankingMode, covering_trees, methodology_hash,
                     rank, tree_view)
from .splitting import TreeParams

# knobs that never change results and so stay out of the config hash
_RUNTIME_ONLY = ("workers",)


@dataclass(frozen=True)
class AuditConfig:
    metric: str = "statistical-parity"
    sensitive: tuple | None = None
    ranking: str = "confidence"
    n_groups: int = 3
    q: float = 0.05                   # report findings with p_adjusted <= q
    seed: int = 0
    n_trees: int = 25
    subsample_fraction: float = 0.632
    alpha: float = 0.1
    stop_rule: str = "mincriterion"
    mtry: int | str | None = None
    min_node_size: int = 20
    min_leaf_size: int = 7
    max_depth: int | None = None
    workers: int = 1

    def __post_init__(self):
        Metric.parse(self.metric)
        RankingMode.parse(self.ranking)
        if self.n_groups < 1:
            raise ValueError("n_groups must be >= 1")
        if not 0.0 < self.q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.sensitive is not None:
            object.__setattr__(self, "sensitive", tuple(self.sensitive))
        self.forest_params()  # validates tree and forest fields

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def tree_params(self) -> TreeParams:
        return TreeParams(alpha=self.alpha, min_node_size=self.min_node_size,
                          min_leaf_size=self.min_leaf_size, max_depth=self.max_depth,
                          mtry=self.mtry, stop_rule=self.stop_rule)

    def forest_params(self) -> ForestParams:
        return ForestParams(n_trees=self.n_trees, subsample_fraction=self.subsample_fraction,
                            tree_params=self.tree_params(), master_seed=self.seed)

    def resolved(self) -> dict:
        out = asdict(self)
        out["metric"] = Metric.parse(self.metric).value
        out["ranking"] = RankingMode.parse(self.ranking).value
        out["sensitive"] = None if self.sensitive is None else list(self.sensitive)
        for k in _RUNTIME_ONLY:
            out.pop(k)
        return out

    def with_overrides(self, **kw) -> "AuditConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def dataset_fingerprint(dataset: AuditDataset) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([(a.name, a.kind, list(a.levels), a.sensitive) for a in dataset.schema]).encode())
    for a in dataset.schema:
        h.update(dataset.values(a.name).tobytes())
    h.update(dataset.outcome_at().tobytes())
    if dataset.has_truth:
        h.update(dataset.truth_at().tobytes())
    return h.hexdigest()


def config_hash(resolved: dict, fingerprint: str) -> str:
    blob = json.dumps({"config": resolved, "dataset": fingerprint}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _timestamp():
    # reports are reproducible by default; SOURCE_DATE_EPOCH opts into a stamp
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return None
    import datetime as _dt
    return _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc).isoformat()


def run_audit(dataset: AuditDataset, config: AuditConfig = AuditConfig()) -> AuditReport:
    metric = Metric.parse(config.metric)
    mode = RankingMode.parse(config.ranking)
    if metric.requires_truth and not dataset.has_truth:
        raise ValueError("equalized odds needs truth labels")
    if config.sensitive is not None:
        dataset = dataset.with_sensitive(config.sensitive)
    cands = generate_subgroups(dataset, config.forest_params(), metric, workers=config.workers)
    tested = evaluate_candidates(cands.subgroups, dataset, cands.d2, metric)
    ranked = [f for f in rank(tested, mode) if f.p_adjusted <= config.q]
    untestable = sorted((f for f in tested if not f.testable), key=lambda f: str(f.criterion))
    chosen = covering_trees(ranked, config.n_groups)
    by_id = {t.tree_id: t for t in cands.trees}
    trees = [tree_view(by_id[i], dataset, cands.d2, metric) for i in chosen]

    resolved = config.resolved()
    fingerprint = dataset_fingerprint(dataset)
    meta = {
        "engine": {"name": "subgroup-audit", "version": __version__},
        "dataset": {
            "name": dataset.name,
            "n_rows": dataset.n_rows,
            "attributes": dataset.attribute_names,
            "sensitive": dataset.sensitive_attributes,
            "sha256": fingerprint,
        },
        "metric": metric.value,
        "ranking": mode.value,
        "n_groups": config.n_groups,
        "q": config.q,
        "seed": config.seed,
        "config": resolved,
        "config_hash": config_hash(resolved, fingerprint),
        "tree_seeds": [str(s) for s in cands.tree_seeds],
        "d1_size": int(cands.d1.size),
        "d2_size": int(cands.d2.size),
        "n_candidates": len(cands.subgroups),
        "n_tested": sum(f.testable for f in tested),
        "n_significant": len(ranked),
        "timestamp": _timestamp(),
        "methodology": list(METHODOLOGY),
        "methodology_hash": methodology_hash(),
    }
    return AuditReport(meta, ranked, trees, untestable)
