"""Locating subgroups with disparate outcomes in tabular audit data."""

__version__ = "0.1.0"

from .data import (AttributeSchema, AuditDataset, Criterion, CriterionError, IngestError, Metric,
                   Predicate, SchemaDeclaration, ingest, membership, parse_criterion, serialize)
from .disparity import Finding, benjamini_hochberg, chi2_eo, chi2_sp, evaluate_candidates
from .forest import CandidateSet, ForestParams, generate_subgroups, split_halves
from .splitting import TreeParams, grow_tree
from .report import (AuditReport, RankingMode, rank, render_report, render_tree_viz,
                     report_schema)
from .pipeline import AuditConfig, run_audit
from .synthetic import Dataset1Params, Dataset2Params, gen_dataset1, gen_dataset2
from .benchmark import BenchmarkConfig, GroundTruth, locate_success, run_benchmark

__all__ = [
    "AttributeSchema", "AuditDataset", "Criterion", "CriterionError", "IngestError", "Metric",
    "Predicate", "SchemaDeclaration", "ingest", "membership", "parse_criterion", "serialize",
    "Finding", "benjamini_hochberg", "chi2_eo", "chi2_sp", "evaluate_candidates",
    "CandidateSet", "ForestParams", "generate_subgroups", "split_halves",
    "TreeParams", "grow_tree",
    "AuditReport", "RankingMode", "rank", "render_report", "render_tree_viz", "report_schema",
    "AuditConfig", "run_audit",
    "Dataset1Params", "Dataset2Params", "gen_dataset1", "gen_dataset2",
    "BenchmarkConfig", "GroundTruth", "locate_success", "run_benchmark",
]
