"""Disparity magnitudes, chi-squared tests and false-discovery correction.

Equalized-odds counts assume the outcome column is the prediction-error
indicator (1 = wrong prediction) and ``truth`` is the actual label, so a
false positive is ``y=1, truth=0`` and a false negative ``y=1, truth=1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import AuditDataset, Criterion, Metric, membership

P_FLOOR = 1e-300


class Untestable(ValueError):
    """The contingency table has an empty group or a degenerate marginal."""


@dataclass(frozen=True)
class ParityCounts:
    pos_in: int
    neg_in: int
    pos_out: int
    neg_out: int

    @property
    def total(self):
        return self.pos_in + self.neg_in + self.pos_out + self.neg_out

    @property
    def size_in(self):
        return self.pos_in + self.neg_in


@dataclass(frozen=True)
class OddsCounts:
    fp_in: int
    tn_in: int
    fn_in: int
    tp_in: int
    fp_out: int
    tn_out: int
    fn_out: int
    tp_out: int

    @property
    def total(self):
        return (self.fp_in + self.tn_in + self.fn_in + self.tp_in
                + self.fp_out + self.tn_out + self.fn_out + self.tp_out)

    @property
    def size_in(self):
        return self.fp_in + self.tn_in + self.fn_in + self.tp_in


def parity_counts(y, mask) -> ParityCounts:
    y = np.asarray(y, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    pos_in = int(np.count_nonzero(y & mask))
    pos_out = int(np.count_nonzero(y & ~mask))
    n_in = int(np.count_nonzero(mask))
    return ParityCounts(pos_in, n_in - pos_in, pos_out, y.size - n_in - pos_out)


def odds_counts(y, truth, mask) -> OddsCounts:
    err = np.asarray(y, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    m = np.asarray(mask, dtype=bool)

    def c(sel):
        return int(np.count_nonzero(sel))

    return OddsCounts(
        fp_in=c(err & ~t & m), tn_in=c(~err & ~t & m),
        fn_in=c(err & t & m), tp_in=c(~err & t & m),
        fp_out=c(err & ~t & ~m), tn_out=c(~err & ~t & ~m),
        fn_out=c(err & t & ~m), tp_out=c(~err & t & ~m),
    )


def disparity_sp(c: ParityCounts) -> float:
    """Statistical parity difference: positive rate inside minus outside."""
    n_in = c.pos_in + c.neg_in
    n_out = c.pos_out + c.neg_out
    if n_in == 0 or n_out == 0:
        raise Untestable("empty group or empty complement")
    return c.pos_in / n_in - c.pos_out / n_out


def _rate(num, den):
    if den == 0:
        raise Untestable("undefined error rate (zero denominator)")
    return num / den


def disparity_eo(c: OddsCounts):
    """Absolute odds difference with its signed FPR and FNR components.

    Returns ``(psi_eo, psi_fpr, psi_fnr)``.
    """
    fpr_in = _rate(c.fp_in, c.fp_in + c.tn_in)
    fpr_out = _rate(c.fp_out, c.fp_out + c.tn_out)
    fnr_in = _rate(c.fn_in, c.fn_in + c.tp_in)
    fnr_out = _rate(c.fn_out, c.fn_out + c.tp_out)
    d_fpr = fpr_in - fpr_out
    d_fnr = fnr_in - fnr_out
    return 0.5 * (abs(d_fpr) + abs(d_fnr)), d_fpr, d_fnr


def pearson_2x2(a, b, c, d) -> float:
    """Pearson chi-squared of the table ``[[a, b], [c, d]]`` (no continuity
    correction).  Rows are inside/outside the group, columns the two outcomes."""
    r1, r2, c1, c2 = a + b, c + d, a + c, b + d
    if r1 == 0 or r2 == 0 or c1 == 0 or c2 == 0:
        raise Untestable("degenerate marginal in 2x2 table")
    n = a + b + c + d
    diff = a * d - b * c
    return float(n) * float(diff) * float(diff) / (float(r1) * float(r2) * float(c1) * float(c2))


def chi2_sp(c: ParityCounts):
    """Returns ``(chi2, 1, p)``."""
    x = pearson_2x2(c.pos_in, c.neg_in, c.pos_out, c.neg_out)
    return x, 1, float(stats.chi2.sf(x, 1))


def fisher_combine(pvalues):
    """Fisher's method; returns ``(statistic, df, p)``."""
    ps = [max(float(p), P_FLOOR) for p in pvalues]
    x = -2.0 * sum(math.log(p) for p in ps)
    df = 2 * len(ps)
    return x, df, float(stats.chi2.sf(x, df))


def chi2_eo(c: OddsCounts):
    """Per-error-rate Pearson tests combined by Fisher's method.

    Returns ``(chi2_4, 4, p, p_fpr, p_fnr)``.
    """
    x_fpr = pearson_2x2(c.fp_in, c.tn_in, c.fp_out, c.tn_out)
    x_fnr = pearson_2x2(c.fn_in, c.tp_in, c.fn_out, c.tp_out)
    p_fpr = float(stats.chi2.sf(x_fpr, 1))
    p_fnr = float(stats.chi2.sf(x_fnr, 1))
    x, df, p = fisher_combine([p_fpr, p_fnr])
    return x, df, p, p_fpr, p_fnr


def benjamini_hochberg(p_raw):
    """Benjamini-Hochberg step-up adjusted p-values in the input order."""
    p = np.asarray(p_raw, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("expected a flat list of p-values")
    if p.size == 0:
        return []
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    ranked = np.minimum(ranked, 1.0)
    out = np.empty(m)
    out[order] = ranked
    return out.tolist()


@dataclass
class Finding:
    """One tested subgroup.  Untestable findings keep ``testable=False`` and
    ``reason``; their statistics are None and they are excluded from BH."""

    criterion: Criterion
    count: int
    share: float
    psi: float | None = None
    psi_fpr: float | None = None
    psi_fnr: float | None = None
    chi2: float | None = None
    df: int | None = None
    p_raw: float | None = None
    p_adjusted: float | None = None
    testable: bool = True
    reason: str | None = None
    source_trees: tuple = field(default_factory=tuple)

    @property
    def magnitude(self):
        return abs(self.psi) if self.psi is not None else None

    def to_json(self):
        out = {
            "criterion": str(self.criterion),
            "criterion_structured": self.criterion.to_json(),
            "group_size": {"count": self.count, "share": self.share},
            "psi": self.psi,
            "chi2": self.chi2,
            "df": self.df,
            "p_raw": self.p_raw,
            "p_adjusted": self.p_adjusted,
            "testable": self.testable,
            "source_trees": list(self.source_trees),
        }
        if self.psi_fpr is not None or self.psi_fnr is not None:
            out["psi_fpr"] = self.psi_fpr
            out["psi_fnr"] = self.psi_fnr
        if self.reason is not None:
            out["reason"] = self.reason
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(
            criterion=Criterion.from_json(obj["criterion_structured"]),
            count=obj["group_size"]["count"], share=obj["group_size"]["share"],
            psi=obj.get("psi"), psi_fpr=obj.get("psi_fpr"), psi_fnr=obj.get("psi_fnr"),
            chi2=obj.get("chi2"), df=obj.get("df"), p_raw=obj.get("p_raw"),
            p_adjusted=obj.get("p_adjusted"), testable=obj.get("testable", True),
            reason=obj.get("reason"), source_trees=tuple(obj.get("source_trees", ())),
        )


def test_mask(metric: Metric, y, truth, mask):
    """psi/chi2/p for one membership mask.

    Returns a dict with keys psi, psi_fpr, psi_fnr, chi2, df, p_raw; raises
    :class:`Untestable`.
    """
    if metric is Metric.STATISTICAL_PARITY:
        c = parity_counts(y, mask)
        psi = disparity_sp(c)
        x, df, p = chi2_sp(c)
        return {"psi": psi, "psi_fpr": None, "psi_fnr": None, "chi2": x, "df": df, "p_raw": p}
    c = odds_counts(y, truth, mask)
    psi, d_fpr, d_fnr = disparity_eo(c)
    x, df, p, _, _ = chi2_eo(c)
    return {"psi": psi, "psi_fpr": d_fpr, "psi_fnr": d_fnr, "chi2": x, "df": df, "p_raw": p}


test_mask.__test__ = False


def node_disparity(metric: Metric, y, truth, mask):
    """psi of ``mask`` against its complement, or None when undefined."""
    try:
        if metric is Metric.STATISTICAL_PARITY:
            return disparity_sp(parity_counts(y, mask))
        return disparity_eo(odds_counts(y, truth, mask))[0]
    except Untestable:
        return None


def evaluate_candidates(candidates, dataset: AuditDataset, rows, metric: Metric):
    """Test every candidate on ``rows`` (the held-out half) and BH-correct.

    ``candidates`` is an iterable of :class:`Criterion` or of objects with
    ``criterion`` and ``source_trees`` attributes.  Returns findings in input
    order; BH runs once over all testable findings.
    """
    metric = Metric.parse(metric)
    if metric.requires_truth and not dataset.has_truth:
        raise ValueError("equalized odds needs truth labels")
    rows = np.asarray(rows)
    y = dataset.outcome_at(rows)
    truth = dataset.truth_at(rows) if metric.requires_truth else None
    n = rows.size
    findings = []
    for cand in candidates:
        crit = cand if isinstance(cand, Criterion) else cand.criterion
        trees = () if isinstance(cand, Criterion) else tuple(cand.source_trees)
        mask = membership(crit, dataset, rows)
        count = int(np.count_nonzero(mask))
        share = count / n if n else 0.0
        try:
            res = test_mask(metric, y, truth, mask)
            findings.append(Finding(crit, count, share, source_trees=trees, **res))
        except Untestable as exc:
            findings.append(Finding(crit, count, share, testable=False, reason=str(exc),
                                    source_trees=trees))
    testable = [f for f in findings if f.testable]
    for f, q in zip(testable, benjamini_hochberg([f.p_raw for f in testable])):
        f.p_adjusted = max(q, f.p_raw)
    return findings
