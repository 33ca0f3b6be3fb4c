"""Command-line front end: ``audit``, ``generate``, ``benchmark`` and ``render``.

Errors go to stderr as one line ``error[CODE]: message`` with a nonzero exit
status.  Config files are flat TOML documents whose keys mirror the long flag
names; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import tomli

from . import __version__, kernels
from .benchmark import BenchmarkConfig, run_benchmark, to_csv
from .data import CriterionError, IngestError, SchemaDeclaration, ingest, serialize
from .pipeline import AuditConfig, run_audit
from .report import AuditReport, methodology_hash, render_text, render_tree_viz
from .synthetic import Dataset1Params, Dataset2Params, gen_dataset1, gen_dataset2

SEED_ENV = "SUBGROUP_AUDIT_SEED"

EXIT_USAGE = 2
EXIT_INGEST = 3
EXIT_CONFIG = 4
EXIT_METRIC = 5
EXIT_IO = 6


class CliError(Exception):
    def __init__(self, code, status, message):
        super().__init__(message)
        self.code = code
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("E_USAGE", EXIT_USAGE, message)


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError("E_CONFIG", EXIT_CONFIG, f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _names(text):
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _mtry(text):
    return "all" if str(text) == "all" else int(text)


# keys allowed in config files, with the converter applied to file values
AUDIT_KEYS = {
    "data": str, "schema": str, "metric": str, "sensitive": None, "rank": str,
    "n_groups": int, "q": float, "seed": int, "n_trees": int, "alpha": float,
    "subsample": float, "mtry": _mtry, "stop_rule": str, "min_node_size": int,
    "min_leaf_size": int, "max_depth": int, "workers": int, "out_json": str,
    "out_text": str, "dot_dir": str,
}
BENCH_KEYS = {
    "generator": str, "rho": None, "w": None, "runs": int, "n": int, "engine_variant": str,
    "tolerance": float, "interval_distance": bool, "seed": int, "workers": int, "out": str,
    "n_trees": int, "alpha": float, "stop_rule": str, "n_groups": int, "q": float,
}
# names used in the config block embedded in reports
KEY_ALIASES = {"ranking": "rank", "subsample_fraction": "subsample"}


def load_config(path, allowed):
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise CliError("E_IO", EXIT_IO, f"cannot read config {path}: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise CliError("E_CONFIG", EXIT_CONFIG, f"malformed config {path}: {exc}") from None
    out = {}
    for key, value in raw.items():
        k = key.replace("-", "_")
        k = KEY_ALIASES.get(k, k)
        if k not in allowed:
            raise CliError("E_CONFIG", EXIT_CONFIG, f"unknown config key {key!r} in {path}")
        if isinstance(value, dict):
            raise CliError("E_CONFIG", EXIT_CONFIG, f"config key {key!r} must not be a table")
        conv = allowed[k]
        try:
            out[k] = conv(value) if conv is not None else value
        except (TypeError, ValueError):
            raise CliError("E_CONFIG", EXIT_CONFIG, f"bad value for {key!r}: {value!r}") from None
    return out


def _merge(args, allowed, file_values):
    merged = dict(file_values)
    for k in allowed:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


# ------------------------------------------------------------------ parsers
def build_parser():
    p = _Parser(prog="subgroup-audit", description="Locate subgroups with disparate outcomes.")
    p.add_argument("--version", action="version",
                   version=f"subgroup-audit {__version__} (methodology {methodology_hash()}, "
                           f"kernels {kernels.BACKEND})")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    a = sub.add_parser("audit", help="run an audit on a CSV dataset")
    a.add_argument("--config", help="TOML file with defaults for the flags below")
    a.add_argument("--data", help="CSV file")
    a.add_argument("--schema", help="schema declaration JSON (default: <data>.schema.json)")
    a.add_argument("--metric", choices=["statistical-parity", "equalized-odds", "sp", "eo"])
    a.add_argument("--sensitive", type=_names, help="comma-separated attributes (default: all)")
    a.add_argument("--rank", choices=["confidence", "magnitude"])
    a.add_argument("--n-groups", dest="n_groups", type=int)
    a.add_argument("--q", type=float, help="report findings with adjusted p <= q (default 0.05)")
    a.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
    a.add_argument("--n-trees", dest="n_trees", type=int)
    a.add_argument("--alpha", type=float)
    a.add_argument("--subsample", type=float)
    a.add_argument("--mtry", type=_mtry)
    a.add_argument("--stop-rule", dest="stop_rule", choices=["mincriterion", "significance"])
    a.add_argument("--min-node-size", dest="min_node_size", type=int)
    a.add_argument("--min-leaf-size", dest="min_leaf_size", type=int)
    a.add_argument("--max-depth", dest="max_depth", type=int)
    a.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    a.add_argument("--out-json", dest="out_json")
    a.add_argument("--out-text", dest="out_text", help="text report (default: stdout)")
    a.add_argument("--dot-dir", dest="dot_dir")

    g = sub.add_parser("generate", help="write a synthetic dataset")
    g.add_argument("generator", choices=["dataset1", "dataset2"])
    g.add_argument("--rho", type=float, default=0.3)
    g.add_argument("--w", type=float, default=24.0)
    g.add_argument("--n", type=int, default=10_000)
    g.add_argument("--seed", type=int)
    g.add_argument("--race-probs", dest="race_probs", type=_floats)
    g.add_argument("--gender-probs", dest="gender_probs", type=_floats)
    g.add_argument("--out", required=True, help="CSV path; the schema goes next to it")

    b = sub.add_parser("benchmark", help="location-rate benchmark")
    b.add_argument("config_path", nargs="?", help="TOML benchmark config")
    b.add_argument("--generator", choices=["dataset1", "dataset2"])
    b.add_argument("--rho", type=_floats)
    b.add_argument("--w", type=_floats)
    b.add_argument("--runs", type=int)
    b.add_argument("--n", type=int)
    b.add_argument("--engine-variant", dest="engine_variant", choices=["forest", "single-tree"])
    b.add_argument("--tolerance", type=float)
    b.add_argument("--interval-distance", dest="interval_distance", action="store_true", default=None)
    b.add_argument("--seed", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--n-trees", dest="n_trees", type=int)
    b.add_argument("--alpha", type=float)
    b.add_argument("--stop-rule", dest="stop_rule", choices=["mincriterion", "significance"])
    b.add_argument("--n-groups", dest="n_groups", type=int)
    b.add_argument("--q", type=float)
    b.add_argument("--out", help="CSV output path")

    r = sub.add_parser("render", help="re-render a saved JSON report")
    r.add_argument("report")
    r.add_argument("--format", choices=["text", "json", "dot"], default="text")
    r.add_argument("--n-groups", dest="n_groups", type=int)
    r.add_argument("--out", help="output file (text/json) or directory (dot)")
    return p


# ----------------------------------------------------------------- commands
def _write(path, text):
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError("E_IO", EXIT_IO, f"cannot write {path}: {exc.strerror}") from None


def _schema_path(data_path):
    root, _ = os.path.splitext(data_path)
    return root + ".schema.json"


def _audit_config(v) -> AuditConfig:
    kw = dict(metric=v.get("metric", "statistical-parity"), sensitive=v.get("sensitive"),
              ranking=v.get("rank", "confidence"), seed=v.get("seed", _default_seed()),
              workers=v.get("workers", os.cpu_count() or 1))
    for src, dst in (("n_groups", "n_groups"), ("q", "q"), ("n_trees", "n_trees"),
                     ("alpha", "alpha"), ("subsample", "subsample_fraction"), ("mtry", "mtry"),
                     ("stop_rule", "stop_rule"), ("min_node_size", "min_node_size"),
                     ("min_leaf_size", "min_leaf_size"), ("max_depth", "max_depth")):
        if src in v:
            kw[dst] = v[src]
    if isinstance(kw["sensitive"], str):
        kw["sensitive"] = _names(kw["sensitive"])
    try:
        return AuditConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise CliError("E_CONFIG", EXIT_CONFIG, str(exc)) from None


def cmd_audit(args, out=sys.stdout):
    file_values = load_config(args.config, AUDIT_KEYS) if args.config else {}
    v = _merge(args, AUDIT_KEYS, file_values)
    if not v.get("data"):
        raise CliError("E_CONFIG", EXIT_CONFIG, "no dataset given (--data)")
    config = _audit_config(v)
    if not os.path.isfile(v["data"]):
        raise CliError("E_IO", EXIT_IO, f"cannot read {v['data']}: no such file")
    schema_path = v.get("schema") or _schema_path(v["data"])
    try:
        with open(schema_path, encoding="utf-8") as fh:
            decl = SchemaDeclaration.from_mapping(json.load(fh))
    except OSError as exc:
        raise CliError("E_IO", EXIT_IO, f"cannot read schema {schema_path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError("E_INGEST", EXIT_INGEST, f"bad schema {schema_path}: {exc}") from None
    try:
        dataset = ingest(v["data"], decl, name=os.path.basename(v["data"]))
    except OSError as exc:
        raise CliError("E_IO", EXIT_IO, f"cannot read {v['data']}: {exc.strerror}") from None
    except IngestError as exc:
        raise CliError("E_INGEST", EXIT_INGEST, str(exc)) from None
    if config.metric in ("equalized-odds", "eo") and not dataset.has_truth:
        raise CliError("E_METRIC", EXIT_METRIC, "equalized odds needs a truth column in the schema")
    try:
        report = run_audit(dataset, config)
    except CriterionError as exc:
        raise CliError("E_CONFIG", EXIT_CONFIG, str(exc)) from None
    except ValueError as exc:
        raise CliError("E_CONFIG", EXIT_CONFIG, str(exc)) from None
    _emit_report(report, v.get("out_json"), v.get("out_text"), v.get("dot_dir"), out)
    return 0


def _emit_report(report, out_json, out_text, dot_dir, out, n_groups=None):
    if out_json:
        _write(out_json, report.dumps())
    text = render_text(report)
    if out_text:
        _write(out_text, text)
    elif out is not None:
        out.write(text)
    if dot_dir:
        for tid, dot in render_tree_viz(report, n_groups).items():
            _write(os.path.join(dot_dir, f"tree_{tid}.dot"), _stamp_dot(dot, report))


def _stamp_dot(dot, report):
    return f"// config_hash: {report.metadata.get('config_hash')}\n" + dot


def cmd_generate(args, out=sys.stdout):
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        if args.generator == "dataset1":
            kw = dict(n=args.n, rho=args.rho, w=args.w, seed=seed)
            if args.race_probs:
                kw["race_probs"] = tuple(args.race_probs)
            if args.gender_probs:
                kw["gender_probs"] = tuple(args.gender_probs)
            params = Dataset1Params(**kw)
            dataset = gen_dataset1(params)
        else:
            params = Dataset2Params(n=args.n, rho=args.rho, seed=seed)
            dataset = gen_dataset2(params)
    except ValueError as exc:
        raise CliError("E_CONFIG", EXIT_CONFIG, str(exc)) from None
    text, decl = serialize(dataset)
    sidecar = decl.to_mapping()
    gen = {"generator": args.generator, "params": params.to_json()}
    gen["config_hash"] = _hash(gen)
    sidecar["generated_by"] = gen
    _write(args.out, text)
    _write(_schema_path(args.out), json.dumps(sidecar, indent=2) + "\n")
    out.write(f"wrote {dataset.n_rows} rows to {args.out}\n")
    return 0


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def cmd_benchmark(args, out=sys.stdout):
    file_values = load_config(args.config_path, BENCH_KEYS) if args.config_path else {}
    v = _merge(args, BENCH_KEYS, file_values)
    generator = v.get("generator", "dataset1")
    rhos = v.get("rho", [0.3])
    rhos = [float(x) for x in (rhos if isinstance(rhos, list) else [rhos])]
    ws = v.get("w", [24.0])
    ws = [float(x) for x in (ws if isinstance(ws, list) else [ws])]
    if generator == "dataset1":
        grid = tuple({"rho": r, "w": w} for r in rhos for w in ws)
    else:
        grid = tuple({"rho": r} for r in rhos)
    audit_kw = {k: v[k] for k in ("n_trees", "alpha", "stop_rule", "n_groups", "q") if k in v}
    try:
        config = BenchmarkConfig(
            generator=generator, grid=grid, runs=v.get("runs", 100), n=v.get("n", 10_000),
            variant=v.get("engine_variant", "forest"), audit=AuditConfig(**audit_kw),
            tolerance=v.get("tolerance", 0.05), interval_distance=bool(v.get("interval_distance", False)),
            master_seed=v.get("seed", _default_seed()), workers=v.get("workers", os.cpu_count() or 1))
    except (TypeError, ValueError) as exc:
        raise CliError("E_CONFIG", EXIT_CONFIG, str(exc)) from None
    rows = run_benchmark(config)
    text = to_csv(rows)
    if v.get("out"):
        _write(v["out"], text)
    out.write(text)
    return 0


def cmd_render(args, out=sys.stdout):
    try:
        with open(args.report, encoding="utf-8") as fh:
            report = AuditReport.loads(fh.read())
    except OSError as exc:
        raise CliError("E_IO", EXIT_IO, f"cannot read {args.report}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError("E_INGEST", EXIT_INGEST, f"not a report: {exc}") from None
    if args.format == "dot":
        if not args.out:
            raise CliError("E_CONFIG", EXIT_CONFIG, "--out directory required for dot output")
        for tid, dot in render_tree_viz(report, args.n_groups).items():
            _write(os.path.join(args.out, f"tree_{tid}.dot"), _stamp_dot(dot, report))
        return 0
    text = report.dumps() if args.format == "json" else render_text(report)
    if args.out:
        _write(args.out, text)
    else:
        out.write(text)
    return 0


COMMANDS = {"audit": cmd_audit, "generate": cmd_generate, "benchmark": cmd_benchmark,
            "render": cmd_render}


def main(argv=None, out=None, err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise CliError("E_USAGE", EXIT_USAGE, "missing command (audit, generate, benchmark, render)")
        return COMMANDS[args.command](args, out)
    except CliError as exc:
        err.write(f"error[{exc.code}]: {exc}\n")
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
