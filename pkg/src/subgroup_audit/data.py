"""Tabular audit data, attribute schema and the subgroup-criterion language.

A subgroup is described by a :class:`Criterion`, a conjunction of
:class:`Predicate` objects.  Categorical predicates select a set of levels,
continuous predicates select a half-open interval ``(lower, upper]``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


class IngestError(ValueError):
    """Raised when a CSV source cannot be turned into an :class:`AuditDataset`."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        prefix = ", ".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.row = row
        self.column = column


class CriterionError(ValueError):
    """Invalid predicate, unknown attribute or kind mismatch."""


class UnsatisfiableCriterion(CriterionError):
    """Canonicalization produced an empty interval or an empty level set."""


class Metric(enum.Enum):
    STATISTICAL_PARITY = "statistical-parity"
    EQUALIZED_ODDS = "equalized-odds"

    @property
    def requires_truth(self) -> bool:
        return self is Metric.EQUALIZED_ODDS

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, Metric):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"sp": "statistical-parity", "eo": "equalized-odds"}
        return cls(aliases.get(key, key))


CATEGORICAL = "categorical"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    kind: str
    levels: tuple = ()
    sensitive: bool = True

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, CONTINUOUS):
            raise ValueError(f"unknown attribute kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.levels:
                raise ValueError(f"categorical attribute {self.name!r} has no levels")
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f"categorical attribute {self.name!r} has duplicate levels")
        elif self.levels:
            raise ValueError(f"continuous attribute {self.name!r} cannot carry levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class AuditDataset:
    """Immutable column store of predictors, binary outcome and optional truth.

    Categorical columns are kept as ``int32`` level codes into
    ``schema.levels``; continuous columns as ``float64``.  All row access made
    by the search and testing code goes through :meth:`values`,
    :meth:`outcome_at` and :meth:`truth_at` so that access can be audited.
    """

    def __init__(self, schema: Sequence[AttributeSchema], columns: Mapping[str, np.ndarray],
                 y, truth=None, name: str = "dataset"):
        self.schema = tuple(schema)
        self.name = name
        names = [a.name for a in self.schema]
        if len(set(names)) != len(names):
            raise ValueError("duplicate attribute names in schema")
        self._by_name = {a.name: a for a in self.schema}
        y = np.asarray(y)
        if y.ndim != 1:
            raise ValueError("outcome must be one-dimensional")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("outcome must be binary (0/1)")
        self._y = _frozen(y.astype(np.int8))
        if truth is not None:
            truth = np.asarray(truth)
            if truth.shape != y.shape or not np.isin(truth, (0, 1)).all():
                raise ValueError("truth must be binary (0/1) and aligned with the outcome")
            truth = _frozen(truth.astype(np.int8))
        self._truth = truth
        self._columns = {}
        for attr in self.schema:
            col = np.asarray(columns[attr.name])
            if col.shape != y.shape:
                raise ValueError(f"column {attr.name!r} has {col.shape[0]} rows, expected {y.shape[0]}")
            if attr.is_categorical:
                col = col.astype(np.int32)
                if col.size and (col.min() < 0 or col.max() >= len(attr.levels)):
                    raise ValueError(f"column {attr.name!r} has out-of-range level codes")
            else:
                col = col.astype(np.float64)
                if not np.isfinite(col).all():
                    raise ValueError(f"column {attr.name!r} has non-finite values")
            self._columns[attr.name] = _frozen(col)

    # ----------------------------------------------------------------- access
    def __len__(self):
        return self._y.shape[0]

    @property
    def n_rows(self) -> int:
        return self._y.shape[0]

    @property
    def has_truth(self) -> bool:
        return self._truth is not None

    def attribute(self, name: str) -> AttributeSchema:
        try:
            return self._by_name[name]
        except KeyError:
            raise CriterionError(f"unknown attribute {name!r}") from None

    @property
    def attribute_names(self):
        return [a.name for a in self.schema]

    @property
    def sensitive_attributes(self):
        return [a.name for a in self.schema if a.sensitive]

    def values(self, name: str, rows=None) -> np.ndarray:
        col = self._columns[self.attribute(name).name]
        return col if rows is None else col[rows]

    def outcome_at(self, rows=None) -> np.ndarray:
        return self._y if rows is None else self._y[rows]

    def truth_at(self, rows=None) -> np.ndarray:
        if self._truth is None:
            raise ValueError("dataset carries no truth labels")
        return self._truth if rows is None else self._truth[rows]

    def with_sensitive(self, names: Iterable[str] | None) -> "AuditDataset":
        """Copy with the sensitive flag set exactly on ``names`` (None: all)."""
        if names is None:
            wanted = set(self.attribute_names)
        else:
            wanted = set(names)
            unknown = wanted - set(self.attribute_names)
            if unknown:
                raise CriterionError(f"unknown sensitive attribute(s): {', '.join(sorted(unknown))}")
        schema = [AttributeSchema(a.name, a.kind, a.levels, a.name in wanted) for a in self.schema]
        return AuditDataset(schema, self._columns, self._y, self._truth, self.name)

    def __eq__(self, other):
        if not isinstance(other, AuditDataset):
            return NotImplemented
        if self.schema != other.schema or not np.array_equal(self._y, other._y):
            return False
        if (self._truth is None) != (other._truth is None):
            return False
        if self._truth is not None and not np.array_equal(self._truth, other._truth):
            return False
        return all(np.array_equal(self._columns[n], other._columns[n]) for n in self._columns)

    __hash__ = None

    def __repr__(self):
        return f"AuditDataset({self.name!r}, M={self.n_rows}, K={len(self.schema)})"


# ---------------------------------------------------------------- predicates
@dataclass(frozen=True)
class Predicate:
    """One conjunct of a criterion.

    Categorical: ``levels`` is a frozenset of level names.
    Continuous: ``lower < value <= upper`` with infinite bounds allowed.
    """

    attribute: str
    levels: frozenset | None = None
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if self.levels is not None:
            object.__setattr__(self, "levels", frozenset(self.levels))
            if not self.levels:
                raise UnsatisfiableCriterion(f"empty level set on {self.attribute!r}")
        else:
            if math.isnan(self.lower) or math.isnan(self.upper):
                raise CriterionError("interval bounds cannot be NaN")
            if not self.lower < self.upper:
                raise UnsatisfiableCriterion(
                    f"empty interval ({self.lower}, {self.upper}] on {self.attribute!r}")

    @classmethod
    def one_of(cls, attribute, levels):
        return cls(attribute, levels=frozenset(levels))

    @classmethod
    def interval(cls, attribute, lower=-math.inf, upper=math.inf):
        return cls(attribute, lower=float(lower), upper=float(upper))

    @property
    def is_categorical(self) -> bool:
        return self.levels is not None

    def intersect(self, other: "Predicate") -> "Predicate":
        if other.attribute != self.attribute or other.is_categorical != self.is_categorical:
            raise CriterionError(f"cannot intersect predicates on {self.attribute!r} of different kinds")
        if self.is_categorical:
            return Predicate.one_of(self.attribute, self.levels & other.levels)
        return Predicate.interval(self.attribute, max(self.lower, other.lower),
                                  min(self.upper, other.upper))

    def sorted_levels(self, order: Sequence[str] | None = None):
        if order is None:
            return sorted(self.levels)
        rank = {lvl: i for i, lvl in enumerate(order)}
        return sorted(self.levels, key=lambda l: (rank.get(l, len(rank)), l))

    def to_json(self):
        if self.is_categorical:
            return {"attribute": self.attribute, "levels": sorted(self.levels)}
        return {"attribute": self.attribute, "lower": _num_to_json(self.lower),
                "upper": _num_to_json(self.upper)}

    @classmethod
    def from_json(cls, obj):
        if "levels" in obj:
            return cls.one_of(obj["attribute"], obj["levels"])
        return cls.interval(obj["attribute"], _num_from_json(obj.get("lower")),
                            _num_from_json(obj.get("upper")))

    def terms(self):
        """String conjuncts, e.g. ``['age > 42.0', 'age <= 66.0']``."""
        name = _quote(self.attribute)
        if self.is_categorical:
            inner = ",".join(_quote(l) for l in sorted(self.levels))
            return [f"{name} in {{{inner}}}"]
        out = []
        if self.lower > -math.inf:
            out.append(f"{name} > {_fmt_num(self.lower)}")
        if self.upper < math.inf:
            out.append(f"{name} <= {_fmt_num(self.upper)}")
        return out

    def __str__(self):
        return " AND ".join(self.terms()) or f"{_quote(self.attribute)} > -inf"


def _num_to_json(v):
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return v


def _num_from_json(v):
    if v is None:
        return None
    return float(v)


def _fmt_num(v: float) -> str:
    return repr(float(v))


_BARE = re.compile(r"^[A-Za-z0-9_.\-+/:']+$")


def _quote(s: str) -> str:
    if _BARE.match(s) and s.upper() != "AND" and s != "in":
        return s
    return json.dumps(s, ensure_ascii=False)


@dataclass(frozen=True)
class Criterion:
    """Conjunction of predicates in canonical form.

    Construct through :meth:`of` (which canonicalizes); ``Criterion()`` is the
    empty criterion matching every row.
    """

    predicates: tuple = field(default_factory=tuple)

    @classmethod
    def of(cls, *predicates: Predicate) -> "Criterion":
        return canonicalize(predicates)

    def __iter__(self):
        return iter(self.predicates)

    def __len__(self):
        return len(self.predicates)

    @property
    def attributes(self):
        return tuple(p.attribute for p in self.predicates)

    def get(self, attribute):
        for p in self.predicates:
            if p.attribute == attribute:
                return p
        return None

    def and_(self, predicate: Predicate) -> "Criterion":
        return canonicalize(self.predicates + (predicate,))

    def __str__(self):
        return " AND ".join(t for p in self.predicates for t in p.terms())

    def sort_key(self):
        return str(self)

    def to_json(self):
        return [p.to_json() for p in self.predicates]

    @classmethod
    def from_json(cls, obj):
        return canonicalize(Predicate.from_json(o) for o in obj)

    @classmethod
    def parse(cls, text: str) -> "Criterion":
        return parse_criterion(text)


def canonicalize(predicates: Iterable[Predicate]) -> Criterion:
    """Merge predicates per attribute and sort them by attribute name.

    Unbounded intervals are dropped since they hold for every row.  Raises
    :class:`UnsatisfiableCriterion` when an intersection is empty.
    """
    merged: dict[str, Predicate] = {}
    for p in predicates:
        prev = merged.get(p.attribute)
        merged[p.attribute] = p if prev is None else prev.intersect(p)
    return Criterion(tuple(merged[k] for k in sorted(merged) if not _vacuous(merged[k])))


def _vacuous(p: Predicate) -> bool:
    return not p.is_categorical and p.lower == -math.inf and p.upper == math.inf


def membership(criterion: Criterion, dataset: AuditDataset, rows=None) -> np.ndarray:
    """Boolean mask of ``rows`` (default: all rows) satisfying every predicate."""
    n = dataset.n_rows if rows is None else len(rows)
    mask = np.ones(n, dtype=bool)
    for p in criterion.predicates:
        attr = dataset.attribute(p.attribute)
        if attr.is_categorical != p.is_categorical:
            raise CriterionError(f"predicate kind does not match attribute {p.attribute!r}")
        col = dataset.values(p.attribute, rows)
        if p.is_categorical:
            unknown = p.levels - set(attr.levels)
            if unknown:
                raise CriterionError(
                    f"unknown level(s) {sorted(unknown)} for attribute {p.attribute!r}")
            lut = np.fromiter((lvl in p.levels for lvl in attr.levels), dtype=bool,
                              count=len(attr.levels))
            mask &= lut[col]
        else:
            mask &= (col > p.lower) & (col <= p.upper)
    return mask


# ------------------------------------------------------------- string parsing
_TOKEN = re.compile(r"""\s*(?:(?P<str>"(?:[^"\\]|\\.)*")|(?P<op><=|>|\{|\}|,)|(?P<word>[^\s{},"<>]+))""")


def _tokens(text):
    pos = 0
    out = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise CriterionError(f"cannot parse criterion near {text[pos:]!r}")
        pos = m.end()
        if m.group("str") is not None:
            out.append(("str", json.loads(m.group("str"))))
        elif m.group("op") is not None:
            out.append(("op", m.group("op")))
        else:
            out.append(("word", m.group("word")))
    return out


def parse_criterion(text: str) -> Criterion:
    """Parse ``attr in {l1,l2} AND attr2 > 3.5 AND attr2 <= 9.0``."""
    toks = _tokens(text)
    preds = []
    i = 0

    def value(tok):
        kind, v = tok
        if kind == "op":
            raise CriterionError(f"unexpected {v!r} in criterion")
        return v

    while i < len(toks):
        attr = value(toks[i])
        if i + 1 >= len(toks):
            raise CriterionError("criterion ends after attribute name")
        kind, op = toks[i + 1]
        if kind == "word" and op == "in":
            if i + 2 >= len(toks) or toks[i + 2] != ("op", "{"):
                raise CriterionError("expected '{' after 'in'")
            j = i + 3
            levels = []
            while j < len(toks) and toks[j] != ("op", "}"):
                if toks[j] != ("op", ","):
                    levels.append(value(toks[j]))
                j += 1
            if j >= len(toks):
                raise CriterionError("unterminated level set")
            preds.append(Predicate.one_of(attr, levels))
            i = j + 1
        elif kind == "op" and op in (">", "<="):
            if i + 2 >= len(toks):
                raise CriterionError("missing bound")
            bound = float(value(toks[i + 2]))
            if op == ">":
                preds.append(Predicate.interval(attr, lower=bound))
            else:
                preds.append(Predicate.interval(attr, upper=bound))
            i += 3
        else:
            raise CriterionError(f"unexpected token {op!r} after {attr!r}")
        if i < len(toks):
            if toks[i] != ("word", "AND"):
                raise CriterionError(f"expected AND, got {toks[i][1]!r}")
            i += 1
            if i >= len(toks):
                raise CriterionError("criterion ends with AND")
    return canonicalize(preds)


# ------------------------------------------------------------------ ingestion
ROLES = ("categorical", "continuous", "outcome", "truth", "prediction", "ignored")


@dataclass
class SchemaDeclaration:
    """Column roles for :func:`ingest`.

    ``roles`` maps every CSV column to one of :data:`ROLES`.  ``levels`` may
    pin the level order of categorical columns (otherwise first appearance).
    ``sensitive`` restricts the splitting attributes (None: all predictors).
    A ``prediction`` column, together with a ``truth`` column, makes the
    outcome the prediction-error indicator.
    """

    roles: dict
    levels: dict = field(default_factory=dict)
    sensitive: list | None = None

    def __post_init__(self):
        for col, role in self.roles.items():
            if role not in ROLES:
                raise IngestError(f"unknown role {role!r}", column=col)
        outcome = [c for c, r in self.roles.items() if r == "outcome"]
        pred = [c for c, r in self.roles.items() if r == "prediction"]
        truth = [c for c, r in self.roles.items() if r == "truth"]
        if len(truth) > 1:
            raise IngestError("at most one truth column allowed")
        if pred:
            if outcome or len(pred) > 1 or not truth:
                raise IngestError("a prediction column needs exactly one truth column and no outcome column")
        elif len(outcome) != 1:
            raise IngestError("exactly one outcome column required")

    @classmethod
    def from_mapping(cls, obj: Mapping) -> "SchemaDeclaration":
        """Build from ``{"columns": {name: role | {"role":..., "levels": [...]}}, "sensitive": [...]}``."""
        cols = obj.get("columns", obj)
        roles, levels = {}, {}
        for name, spec in cols.items():
            if isinstance(spec, Mapping):
                roles[name] = spec["role"]
                if "levels" in spec:
                    levels[name] = [str(l) for l in spec["levels"]]
            else:
                roles[name] = spec
        sensitive = obj.get("sensitive") if "columns" in obj else None
        return cls(roles, levels, list(sensitive) if sensitive is not None else None)

    def to_mapping(self):
        cols = {}
        for name, role in self.roles.items():
            if name in self.levels:
                cols[name] = {"role": role, "levels": list(self.levels[name])}
            else:
                cols[name] = role
        out = {"columns": cols}
        if self.sensitive is not None:
            out["sensitive"] = list(self.sensitive)
        return out


def _parse_binary(raw, row, col):
    s = raw.strip()
    if s in ("0", "1"):
        return int(s)
    try:
        v = float(s)
    except ValueError:
        raise IngestError(f"expected 0 or 1, got {raw!r}", row, col) from None
    if v in (0.0, 1.0):
        return int(v)
    raise IngestError(f"expected 0 or 1, got {raw!r}", row, col)


def ingest(source, declaration: SchemaDeclaration, name: str | None = None) -> AuditDataset:
    """Read a header-first CSV (path or text file object) into an :class:`AuditDataset`."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return _ingest_stream(fh, declaration, name or os.fspath(source))
    return _ingest_stream(source, declaration, name or getattr(source, "name", "dataset"))


def _ingest_stream(fh, decl: SchemaDeclaration, name) -> AuditDataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError("empty CSV, header row missing") from None
    seen = set()
    for h in header:
        if h in seen:
            raise IngestError("duplicate column name", column=h)
        seen.add(h)
    missing = set(decl.roles) - seen
    if missing:
        raise IngestError(f"declared column(s) not in header: {', '.join(sorted(missing))}")
    undeclared = [h for h in header if h not in decl.roles]
    if undeclared:
        raise IngestError(f"column(s) without a role: {', '.join(undeclared)}")

    predictors = [h for h in header if decl.roles[h] in ("categorical", "continuous")]
    raw: dict[str, list] = {h: [] for h in header if decl.roles[h] != "ignored"}
    for rownum, rec in enumerate(reader, start=1):
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        if len(rec) != len(header):
            raise IngestError(f"expected {len(header)} fields, got {len(rec)}", row=rownum)
        for h, v in zip(header, rec):
            role = decl.roles[h]
            if role == "ignored":
                continue
            if v.strip() == "":
                raise IngestError("missing value", rownum, h)
            if role == "continuous":
                try:
                    x = float(v)
                except ValueError:
                    raise IngestError(f"unparsable number {v!r}", rownum, h) from None
                if not math.isfinite(x):
                    raise IngestError(f"non-finite number {v!r}", rownum, h)
                raw[h].append(x)
            elif role == "categorical":
                raw[h].append(v.strip())
            else:
                raw[h].append(_parse_binary(v, rownum, h))

    schema, columns = [], {}
    sensitive = set(decl.sensitive) if decl.sensitive is not None else set(predictors)
    unknown = sensitive - set(predictors)
    if unknown:
        raise IngestError(f"sensitive attribute(s) not declared as predictors: {', '.join(sorted(unknown))}")
    for h in predictors:
        if decl.roles[h] == "continuous":
            schema.append(AttributeSchema(h, CONTINUOUS, sensitive=h in sensitive))
            columns[h] = np.array(raw[h], dtype=np.float64)
        else:
            values = raw[h]
            if h in decl.levels:
                levels = list(decl.levels[h])
                extra = sorted(set(values) - set(levels))
                if extra:
                    raise IngestError(f"undeclared level(s) {extra}", column=h)
            else:
                levels = list(dict.fromkeys(values))
            if not levels:
                raise IngestError("categorical column has no values", column=h)
            code = {l: i for i, l in enumerate(levels)}
            schema.append(AttributeSchema(h, CATEGORICAL, tuple(levels), h in sensitive))
            columns[h] = np.array([code[v] for v in values], dtype=np.int32)

    truth_col = next((h for h in header if decl.roles[h] == "truth"), None)
    pred_col = next((h for h in header if decl.roles[h] == "prediction"), None)
    truth = np.array(raw[truth_col], dtype=np.int8) if truth_col else None
    if pred_col:
        y = (np.array(raw[pred_col], dtype=np.int8) != truth).astype(np.int8)
    else:
        out_col = next(h for h in header if decl.roles[h] == "outcome")
        y = np.array(raw[out_col], dtype=np.int8)
    return AuditDataset(schema, columns, y, truth, name=str(name))


def serialize(dataset: AuditDataset, fh=None):
    """Write ``dataset`` as CSV; returns ``(csv_text_or_None, SchemaDeclaration)``.

    Column order: predictors in schema order, then ``y`` and ``truth``.
    Floats use the shortest round-tripping representation.
    """
    buf = io.StringIO() if fh is None else fh
    writer = csv.writer(buf, lineterminator="\n")
    names = dataset.attribute_names
    out_name = "y" if "y" not in names else "_outcome"
    truth_name = "truth" if "truth" not in names else "_truth"
    header = names + [out_name] + ([truth_name] if dataset.has_truth else [])
    writer.writerow(header)
    cols = []
    for a in dataset.schema:
        col = dataset.values(a.name)
        if a.is_categorical:
            cols.append([a.levels[c] for c in col])
        else:
            cols.append([repr(float(v)) for v in col])
    cols.append([str(int(v)) for v in dataset.outcome_at()])
    if dataset.has_truth:
        cols.append([str(int(v)) for v in dataset.truth_at()])
    for rec in zip(*cols):
        writer.writerow(rec)
    roles = {a.name: a.kind for a in dataset.schema}
    roles[out_name] = "outcome"
    if dataset.has_truth:
        roles[truth_name] = "truth"
    levels = {a.name: list(a.levels) for a in dataset.schema if a.is_categorical}
    decl = SchemaDeclaration(roles, levels, dataset.sensitive_attributes)
    return (buf.getvalue() if fh is None else None), decl
