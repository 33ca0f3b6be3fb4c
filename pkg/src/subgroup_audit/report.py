"""Ranking, audit reports and tree visualizations."""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import math
from importlib import resources
from dataclasses import dataclass, field

import numpy as np

from .data import AuditDataset, Criterion, Metric, membership
from .disparity import Finding, node_disparity

NO_FINDINGS = "no statistically significant disparities located"

METHODOLOGY = (
    "Step 1 grows a forest of randomized conditional inference trees on the first data half; "
    "leaf criteria form the candidate subgroups.",
    "Candidates are deduplicated by canonical criterion across trees; subgroups with fewer than "
    "min_leaf_size members in the second half are dropped before testing.",
    "Step 2 tests every candidate on the second half with a Pearson chi-squared test without "
    "continuity correction (equalized odds: FPR and FNR tables combined by Fisher's method, "
    "df = 4) and applies Benjamini-Hochberg correction over all testable candidates.",
    "Split-attribute selection: one-hot quadratic permutation statistic; continuous attributes "
    "enter as within-node quantile bins; Bonferroni over the drawn non-constant attributes; "
    "Monte-Carlo permutations below 30 rows.",
    "Stopping rule 'mincriterion' splits while 1 - p_adjusted >= alpha; 'significance' splits "
    "only while p_adjusted <= alpha.",
    "Equalized-odds trees model the prediction-error indicator with permutations blocked by the "
    "truth label.",
    "Split point: maximal sum over blocks of squared standardized two-sample statistics "
    "(this artifact's choice of discrepancy statistic).",
    "Ranking ties: confidence uses p_adjusted, then larger |psi|, then criterion string; "
    "magnitude uses |psi|, then smaller p_adjusted, then criterion string.",
    "Visualized trees are a minimal set covering the top-ranked findings; node psi is computed "
    "on the second half.",
)


def report_schema() -> dict:
    """The published JSON schema for audit reports."""
    text = resources.files(__package__).joinpath("schema/report.schema.json").read_text("utf-8")
    return json.loads(text)


def methodology_hash(lines=METHODOLOGY) -> str:
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]


class RankingMode(enum.Enum):
    CONFIDENCE = "confidence"
    MAGNITUDE = "magnitude"

    @classmethod
    def parse(cls, value) -> "RankingMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


def _confidence_key(f: Finding):
    return (f.p_adjusted, -abs(f.psi), str(f.criterion))


def _magnitude_key(f: Finding):
    return (-abs(f.psi), f.p_adjusted, str(f.criterion))


def rank(findings, mode=RankingMode.CONFIDENCE):
    """Testable findings in ranking order (untestable ones are dropped)."""
    mode = RankingMode.parse(mode)
    key = _confidence_key if mode is RankingMode.CONFIDENCE else _magnitude_key
    return sorted((f for f in findings if f.testable), key=key)


# ------------------------------------------------------------ tree selection
def covering_trees(findings, n_groups, exact_limit=8):
    """Smallest set of tree ids whose leaves include the top ``n_groups``
    findings.  Ties go to the lexicographically smallest id tuple."""
    top = [set(f.source_trees) for f in findings[:n_groups] if f.source_trees]
    if not top:
        return []
    universe = sorted(set().union(*top))
    if len(universe) <= exact_limit:
        for k in range(1, len(universe) + 1):
            for combo in itertools.combinations(universe, k):
                chosen = set(combo)
                if all(s & chosen for s in top):
                    return list(combo)
    chosen = set()
    remaining = list(top)
    while remaining:
        best = min(universe, key=lambda t: (-sum(t in s for s in remaining), t))
        chosen.add(best)
        remaining = [s for s in remaining if best not in s]
    return sorted(chosen)


def _edge_label(pred) -> str:
    if pred.is_categorical:
        return ", ".join(sorted(pred.levels))
    if pred.upper < math.inf and pred.lower == -math.inf:
        return f"<= {pred.upper:g}"
    if pred.lower > -math.inf and pred.upper == math.inf:
        return f"> {pred.lower:g}"
    return " AND ".join(pred.terms())


def tree_view(tree, dataset: AuditDataset, d2, metric: Metric):
    """JSON-ready tree with node counts and psi evaluated on the held-out half."""
    d2 = np.asarray(d2)
    y = dataset.outcome_at(d2)
    truth = dataset.truth_at(d2) if metric.requires_truth else None
    n2 = d2.size
    nodes = []
    for node in tree.nodes:
        mask = membership(node.criterion, dataset, d2)
        count = int(np.count_nonzero(mask))
        psi = node_disparity(metric, y, truth, mask)
        entry = {
            "id": node.id,
            "parent": node.parent,
            "criterion": str(node.criterion),
            "count": count,
            "share": count / n2 if n2 else 0.0,
            "psi": psi,
            "split_attribute": None if node.split is None else node.split.attribute,
            "children": None if node.children is None else list(node.children),
            "edge_label": None,
        }
        nodes.append(entry)
    for node in tree.nodes:
        if node.split is not None:
            left, right = node.children
            nodes[left]["edge_label"] = _edge_label(node.split.left)
            nodes[right]["edge_label"] = _edge_label(node.split.right)
    return {"tree_id": tree.tree_id, "seed": tree.seed, "nodes": nodes}


# -------------------------------------------------------------------- report
@dataclass
class AuditReport:
    metadata: dict
    findings: list                      # ranked, significant Finding objects
    trees: list = field(default_factory=list)
    untestable: list = field(default_factory=list)

    @property
    def n_groups(self) -> int:
        return self.metadata.get("n_groups", 3)

    @property
    def mode(self) -> RankingMode:
        return RankingMode.parse(self.metadata["ranking"])

    @property
    def metric(self) -> Metric:
        return Metric.parse(self.metadata["metric"])

    def to_json(self):
        findings = []
        for r, f in enumerate(self.findings, start=1):
            obj = {"rank": r}
            obj.update(f.to_json())
            findings.append(obj)
        meta = dict(self.metadata)
        meta["untestable"] = [
            {"criterion": str(f.criterion), "criterion_structured": f.criterion.to_json(),
             "reason": f.reason, "group_size": {"count": f.count, "share": f.share}}
            for f in self.untestable
        ]
        return {"metadata": meta, "findings": findings, "trees": self.trees}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False, allow_nan=False,
                          ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, obj):
        meta = dict(obj["metadata"])
        untestable = []
        for u in meta.pop("untestable", []):
            untestable.append(Finding(Criterion.from_json(u["criterion_structured"]),
                                      u["group_size"]["count"], u["group_size"]["share"],
                                      testable=False, reason=u.get("reason")))
        findings = [Finding.from_json(f) for f in obj["findings"]]
        return cls(meta, findings, list(obj.get("trees", [])), untestable)

    @classmethod
    def loads(cls, text: str):
        return cls.from_json(json.loads(text))


def render_report(report: AuditReport, fmt="json") -> str:
    if fmt == "json":
        return report.dumps()
    if fmt == "text":
        return render_text(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _fmt_p(p):
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def _fmt_signed(x):
    return "n/a" if x is None else f"{x:+.3f}"


def render_text(report: AuditReport) -> str:
    meta = report.metadata
    eo = report.metric is Metric.EQUALIZED_ODDS
    lines = [
        f"Subgroup disparity audit: {meta['dataset']['name']}",
        f"metric: {meta['metric']}   ranking: {meta['ranking']}   "
        f"candidates tested: {meta['n_candidates']}   significance level: {meta['q']}",
        f"seed: {meta['seed']}   config hash: {meta['config_hash']}",
        "",
    ]
    if not report.findings:
        lines.append(NO_FINDINGS)
    else:
        header = ["rank", "subgroup", "group size", "psi"]
        if eo:
            header += ["psi_fpr", "psi_fnr"]
        header += ["chi2", "p"]
        rows = []
        for r, f in enumerate(report.findings, start=1):
            row = [str(r), str(f.criterion), f"{f.count} / {100.0 * f.share:.2f}%", f"{f.psi:.3f}"]
            if eo:
                row += [_fmt_signed(f.psi_fpr), _fmt_signed(f.psi_fnr)]
            row += [f"{f.chi2:.2f}", _fmt_p(f.p_adjusted)]
            rows.append(row)
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
        right = set(range(len(header))) - {1}

        def fmt(row):
            cells = [c.rjust(w) if i in right else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))]
            return "  ".join(cells).rstrip()
        lines.append(fmt(header))
        lines.append("  ".join("-" * w for w in widths))
        lines.extend(fmt(r) for r in rows)
    if report.untestable:
        lines.append("")
        lines.append(f"untestable candidates: {len(report.untestable)}")
    lines.append("")
    lines.append("Methodology:")
    lines.extend(f"  - {m}" for m in meta.get("methodology", METHODOLOGY))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------- DOT
NEUTRAL = (0xF7, 0xF7, 0xF7)
SATURATED = (0xB2, 0x18, 0x2B)


def fill_color(abs_psi, max_abs_psi) -> str:
    """Hex color on a linear scale from neutral (|psi|=0) to saturated (max)."""
    if abs_psi is None or max_abs_psi is None or max_abs_psi <= 0:
        t = 0.0
    else:
        t = min(1.0, max(0.0, abs_psi / max_abs_psi))
    rgb = [round(a + (b - a) * t) for a, b in zip(NEUTRAL, SATURATED)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _html(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _dot_string(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def max_abs_psi(report: AuditReport) -> float:
    vals = [abs(f.psi) for f in report.findings if f.psi is not None]
    for tree in report.trees:
        vals.extend(abs(n["psi"]) for n in tree["nodes"] if n["psi"] is not None)
    return max(vals) if vals else 0.0


def render_tree_dot(tree: dict, scale_max: float, highlight=()) -> str:
    highlight = set(highlight)
    lines = [f"digraph tree_{tree['tree_id']} {{",
             '  node [shape=box, style="rounded,filled", fontname="Helvetica"];',
             '  edge [fontname="Helvetica"];']
    for n in tree["nodes"]:
        parts = []
        if n["split_attribute"] is not None:
            parts.append(f"<b>{_html(n['split_attribute'])}</b>")
        parts.append(f"n = {n['count']} ({100.0 * n['share']:.1f}%)")
        parts.append("&psi; = n/a" if n["psi"] is None else f"&psi; = {n['psi']:.3f}")
        label = "<br/>".join(parts)
        color = fill_color(None if n["psi"] is None else abs(n["psi"]), scale_max)
        extra = ", penwidth=3" if n["criterion"] in highlight else ""
        lines.append(f'  n{n["id"]} [label=<{label}>, fillcolor="{color}"{extra}];')
    for n in tree["nodes"]:
        if n["parent"] is not None:
            lines.append(f'  n{n["parent"]} -> n{n["id"]} [label={_dot_string(n["edge_label"])}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_tree_viz(report: AuditReport, n_groups=None):
    """DOT documents for the selected trees, as ``{tree_id: dot_text}``."""
    n_groups = report.n_groups if n_groups is None else n_groups
    scale_max = max_abs_psi(report)
    top = {str(f.criterion) for f in report.findings[:n_groups]}
    wanted = covering_trees(report.findings, n_groups)
    by_id = {t["tree_id"]: t for t in report.trees}
    return {tid: render_tree_dot(by_id[tid], scale_max, top) for tid in wanted if tid in by_id}
