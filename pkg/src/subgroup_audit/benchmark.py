"""Location-rate benchmark on the synthetic generators."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .pipeline import AuditConfig, run_audit
from .synthetic import (AGE_HIGH, AGE_LOW, GENDERS2, RACES2, Dataset1Params, Dataset2Params,
                        gen_dataset1, gen_dataset2)

CSV_COLUMNS = ("generator", "variant", "rho", "w", "runs", "success_rate", "stderr",
               "age_rate", "race_rate", "params_hash")


@dataclass(frozen=True)
class GroundTruth:
    """Where the planted disparity lives.

    ``relevant``: attributes a finding may use (anything else is a decoy).
    ``required``: attributes a finding must use.
    ``intervals``: true (lower, upper] per continuous attribute.
    ``ranges``: (min, max) per continuous attribute, used for the tolerance
    span and to match infinite bounds.
    ``levels``: optional allowed level sets per categorical attribute.
    """

    relevant: frozenset
    required: frozenset
    intervals: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    levels: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj):
        attrs = frozenset(obj["attributes"])
        return cls(relevant=attrs, required=frozenset(obj.get("required", attrs)),
                   intervals={k: tuple(v) for k, v in obj.get("intervals", {}).items()},
                   ranges={k: tuple(v) for k, v in obj.get("ranges", {}).items()},
                   levels={k: [frozenset(s) for s in v] for k, v in obj.get("levels", {}).items()})


def dataset1_truth(params: Dataset1Params, required=("age",)) -> GroundTruth:
    return GroundTruth(relevant=frozenset({"age", "race"}), required=frozenset(required),
                       intervals={"age": params.interval}, ranges={"age": (AGE_LOW, AGE_HIGH)})


def dataset2_truth() -> GroundTruth:
    return GroundTruth(relevant=frozenset({"race", "gender"}),
                       required=frozenset({"race", "gender"}),
                       levels={"race": [frozenset({r}) for r in RACES2],
                               "gender": [frozenset({g}) for g in GENDERS2]})


def _bound(value, fallback):
    return fallback if math.isinf(value) else value


def matches(criterion, truth: GroundTruth, tolerance=0.05, interval_distance=False) -> bool:
    attrs = set(criterion.attributes)
    if not attrs <= truth.relevant or not truth.required <= attrs:
        return False
    for pred in criterion:
        if pred.attribute in truth.levels and pred.is_categorical:
            if frozenset(pred.levels) not in truth.levels[pred.attribute]:
                return False
        if pred.attribute in truth.intervals and not pred.is_categorical:
            lo_r, hi_r = truth.ranges[pred.attribute]
            t_lo, t_hi = truth.intervals[pred.attribute]
            d_lo = abs(_bound(pred.lower, lo_r) - t_lo)
            d_hi = abs(_bound(pred.upper, hi_r) - t_hi)
            limit = tolerance * (hi_r - lo_r)
            if interval_distance:
                if (d_lo + d_hi) / 2.0 > limit:
                    return False
            elif d_lo > limit or d_hi > limit:
                return False
    return True


def locate_success(findings, truth: GroundTruth, tolerance=0.05, n_groups=3,
                   interval_distance=False) -> bool:
    """True iff one of the top ``n_groups`` findings matches the ground truth.

    Per-bound matching by default: every continuous bound within
    ``tolerance`` times the attribute span of the true bound.
    """
    return any(matches(f.criterion, truth, tolerance, interval_distance)
               for f in list(findings)[:n_groups])


# ----------------------------------------------------------------- harness
@dataclass(frozen=True)
class BenchmarkConfig:
    generator: str = "dataset1"
    grid: tuple = ({"rho": 0.3, "w": 24.0},)
    runs: int = 100
    n: int = 10_000
    variant: str = "forest"            # or "single-tree"
    audit: AuditConfig = AuditConfig()
    tolerance: float = 0.05
    interval_distance: bool = False
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.generator not in ("dataset1", "dataset2"):
            raise ValueError("generator must be dataset1 or dataset2")
        if self.variant not in ("forest", "single-tree"):
            raise ValueError("variant must be forest or single-tree")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        object.__setattr__(self, "grid", tuple(dict(c) for c in self.grid))
        for cell in self.grid:
            self.dataset_params(cell, 0)  # validates every cell up front

    def dataset_params(self, cell, seed):
        if self.generator == "dataset1":
            return Dataset1Params(n=self.n, seed=seed, **cell)
        return Dataset2Params(n=self.n, seed=seed, **{k: v for k, v in cell.items() if k != "w"})

    def audit_config(self, seed) -> AuditConfig:
        cfg = replace(self.audit, seed=seed, workers=1)
        if self.variant == "single-tree":
            cfg = replace(cfg, n_trees=1, subsample_fraction=1.0, mtry="all")
        return cfg

    def params_hash(self, cell) -> str:
        blob = {"generator": self.generator, "cell": cell, "runs": self.runs, "n": self.n,
                "variant": self.variant, "audit": self.audit_config(0).resolved(),
                "tolerance": self.tolerance, "interval_distance": self.interval_distance,
                "master_seed": self.master_seed}
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


def run_seed(master_seed, cell_index, run_index) -> int:
    ss = np.random.SeedSequence([master_seed, cell_index, run_index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _one_run(job):
    config, cell, seed = job
    params = config.dataset_params(cell, seed)
    audit = config.audit_config(seed)
    if config.generator == "dataset1":
        report = run_audit(gen_dataset1(params), audit)
        kw = dict(tolerance=config.tolerance, n_groups=audit.n_groups,
                  interval_distance=config.interval_distance)
        age = locate_success(report.findings, dataset1_truth(params, ("age",)), **kw)
        race = locate_success(report.findings, dataset1_truth(params, ("race",)), **kw)
        return age, age, race
    report = run_audit(gen_dataset2(params), audit)
    ok = locate_success(report.findings, dataset2_truth(), config.tolerance, audit.n_groups)
    return ok, None, None


def run_outcomes(config: BenchmarkConfig):
    """Per-run ``(success, age_located, race_located)`` tuples, cell-major.

    The age/race entries are None for dataset 2.
    """
    jobs = [(config, cell, run_seed(config.master_seed, ci, r))
            for ci, cell in enumerate(config.grid) for r in range(config.runs)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as ex:
            return list(ex.map(_one_run, jobs, chunksize=1))
    return [_one_run(j) for j in jobs]


def summarize(config: BenchmarkConfig, results):
    """Aggregate :func:`run_outcomes` output into CSV rows."""
    rows = []
    for ci, cell in enumerate(config.grid):
        chunk = results[ci * config.runs:(ci + 1) * config.runs]
        rate = sum(r[0] for r in chunk) / config.runs
        rows.append({
            "generator": config.generator,
            "variant": config.variant,
            "rho": cell.get("rho"),
            "w": cell.get("w") if config.generator == "dataset1" else None,
            "runs": config.runs,
            "success_rate": rate,
            "stderr": math.sqrt(rate * (1.0 - rate) / config.runs),
            "age_rate": None if chunk[0][1] is None else sum(r[1] for r in chunk) / config.runs,
            "race_rate": None if chunk[0][2] is None else sum(r[2] for r in chunk) / config.runs,
            "params_hash": config.params_hash(cell),
        })
    return rows


def run_benchmark(config: BenchmarkConfig):
    """Location rate per grid cell, as a list of dicts keyed by CSV_COLUMNS."""
    return summarize(config, run_outcomes(config))


def to_csv(rows, fh=None):
    buf = io.StringIO() if fh is None else fh
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else (f"{r[k]:.6g}" if isinstance(r[k], float) else r[k]))
                    for k in CSV_COLUMNS})
    return buf.getvalue() if fh is None else None
