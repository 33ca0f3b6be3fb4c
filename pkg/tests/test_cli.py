import io
import json
import os

import jsonschema
import pytest

from subgroup_audit import __version__
from subgroup_audit.cli import main
from subgroup_audit.report import report_schema


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def d1(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "d1.csv"
    code, out, _ = run("generate", "dataset1", "--rho", 0.3, "--w", 24, "--n", 3000, "--seed", 7,
                       "--out", path)
    assert code == 0
    return path


def test_generate_writes_csv_and_schema(d1):
    assert d1.read_text().splitlines()[0] == "age,race,gender,y"
    assert len(d1.read_text().splitlines()) == 3001
    side = json.loads(d1.with_suffix(".schema.json").read_text())
    assert side["columns"]["y"] == "outcome"
    assert side["generated_by"]["params"]["seed"] == 7
    assert len(side["generated_by"]["config_hash"]) == 16


def test_generate_dataset2_columns(tmp_path):
    p = tmp_path / "d2.csv"
    assert run("generate", "dataset2", "--rho", 0.4, "--n", 100, "--out", p)[0] == 0
    assert p.read_text().splitlines()[0] == "race,gender,age,y"


def test_generate_invalid_parameters_write_nothing(tmp_path):
    p = tmp_path / "bad.csv"
    code, _, err = run("generate", "dataset1", "--rho", 0.45, "--w", 10, "--out", p)
    assert code == 4 and err.startswith("error[E_CONFIG]:")
    assert not p.exists() and not (tmp_path / "bad.schema.json").exists()


def test_audit_outputs(d1, tmp_path):
    code, out, err = run("audit", "--data", d1, "--seed", 1, "--n-trees", 6, "--workers", 1,
                         "--out-json", tmp_path / "r.json", "--dot-dir", tmp_path / "dots")
    assert code == 0, err
    assert out.startswith("Subgroup disparity audit: d1.csv")
    doc = json.loads((tmp_path / "r.json").read_text())
    jsonschema.validate(doc, report_schema())
    dots = sorted(os.listdir(tmp_path / "dots"))
    assert dots and all(d.endswith(".dot") for d in dots)
    first = (tmp_path / "dots" / dots[0]).read_text().splitlines()[0]
    assert first == f"// config_hash: {doc['metadata']['config_hash']}"


def test_audit_is_byte_identical_across_runs_and_workers(d1, tmp_path):
    outs = []
    for i, workers in enumerate((1, 1, 4, 8)):
        path = tmp_path / f"r{i}.json"
        assert run("audit", "--data", d1, "--seed", 5, "--n-trees", 8, "--workers", workers,
                   "--out-json", path, "--out-text", tmp_path / f"r{i}.txt")[0] == 0
        outs.append(path.read_bytes())
    assert len(set(outs)) == 1


def test_embedded_config_reproduces_report(d1, tmp_path):
    first = tmp_path / "a.json"
    run("audit", "--data", d1, "--seed", 3, "--n-trees", 5, "--rank", "magnitude",
        "--out-json", first, "--out-text", tmp_path / "a.txt")
    cfg = json.loads(first.read_text())["metadata"]["config"]
    lines = [f"data = {json.dumps(str(d1))}"]
    for k, v in cfg.items():
        if v is not None:
            lines.append(f"{k} = {json.dumps(v)}")
    toml = tmp_path / "cfg.toml"
    toml.write_text("\n".join(lines) + "\n")
    second = tmp_path / "b.json"
    code, _, err = run("audit", "--config", toml, "--out-json", second,
                       "--out-text", tmp_path / "b.txt")
    assert code == 0, err
    assert first.read_bytes() == second.read_bytes()


def test_seed_from_environment(d1, tmp_path, monkeypatch):
    monkeypatch.setenv("SUBGROUP_AUDIT_SEED", "9")
    run("audit", "--data", d1, "--n-trees", 3, "--out-json", tmp_path / "e.json",
        "--out-text", tmp_path / "e.txt")
    assert json.loads((tmp_path / "e.json").read_text())["metadata"]["seed"] == 9
    monkeypatch.setenv("SUBGROUP_AUDIT_SEED", "nine")
    assert run("audit", "--data", d1, "--n-trees", 3)[0] == 4


@pytest.mark.parametrize("argv, code, tag", [
    (["audit", "--data", "missing.csv"], 6, "E_IO"),
    (["audit", "--bogus"], 2, "E_USAGE"),
    (["audit"], 4, "E_CONFIG"),
    ([], 2, "E_USAGE"),
    (["render", "nope.json"], 6, "E_IO"),
])
def test_error_codes(argv, code, tag):
    got, out, err = run(*argv)
    assert got == code
    assert err.startswith(f"error[{tag}]:") and err.count("\n") == 1


def test_config_errors_fail_before_outputs(d1, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('data = "x.csv"\nturbo = true\n')
    out_json = tmp_path / "never.json"
    code, _, err = run("audit", "--config", bad, "--out-json", out_json)
    assert code == 4 and "turbo" in err and not out_json.exists()
    bad.write_text("data = [\n")
    assert run("audit", "--config", bad)[0] == 4
    assert run("audit", "--data", d1, "--n-trees", 0, "--out-json", out_json)[0] == 4
    assert run("audit", "--data", d1, "--sensitive", "height", "--out-json", out_json)[0] == 4
    assert not out_json.exists()


def test_metric_needs_truth(d1):
    code, _, err = run("audit", "--data", d1, "--metric", "equalized-odds")
    assert code == 5 and err.startswith("error[E_METRIC]")


def test_ingest_error_code(tmp_path):
    data = tmp_path / "x.csv"
    data.write_text("a,y\nq,2\n")
    (tmp_path / "x.schema.json").write_text(json.dumps({"columns": {"a": "categorical",
                                                                    "y": "outcome"}}))
    code, _, err = run("audit", "--data", data)
    assert code == 3 and "row 1" in err


def test_no_findings_exits_zero(tmp_path):
    data = tmp_path / "flat.csv"
    rows = ["a,y"] + [f"{'xyz'[i % 3]},{(i // 3) % 2}" for i in range(300)]
    data.write_text("\n".join(rows) + "\n")
    (tmp_path / "flat.schema.json").write_text(json.dumps({"columns": {"a": "categorical",
                                                                       "y": "outcome"}}))
    code, out, _ = run("audit", "--data", data, "--n-trees", 3)
    assert code == 0 and "no statistically significant disparities located" in out


def test_render_round_trip(d1, tmp_path):
    rep = tmp_path / "r.json"
    run("audit", "--data", d1, "--seed", 2, "--n-trees", 4, "--out-json", rep,
        "--out-text", tmp_path / "r.txt")
    code, out, _ = run("render", rep, "--format", "json")
    assert code == 0 and out == rep.read_text()
    code, out, _ = run("render", rep)
    assert out == (tmp_path / "r.txt").read_text()
    assert run("render", rep, "--format", "dot")[0] == 4
    assert run("render", rep, "--format", "dot", "--out", tmp_path / "dots")[0] == 0
    assert os.listdir(tmp_path / "dots")


def test_benchmark_command(tmp_path):
    cfg = tmp_path / "b.toml"
    cfg.write_text('generator = "dataset2"\nrho = [0.0, 0.3]\nruns = 2\nn = 1200\nn_trees = 4\n')
    out_csv = tmp_path / "b.csv"
    code, out, err = run("benchmark", cfg, "--out", out_csv, "--workers", 1)
    assert code == 0, err
    lines = out_csv.read_text().splitlines()
    assert lines[0].startswith("generator,variant,rho,w,runs,success_rate,stderr")
    assert len(lines) == 3 and out == out_csv.read_text()
    code, out, _ = run("benchmark", cfg, "--engine-variant", "single-tree", "--runs", 1,
                       "--workers", 1)
    assert code == 0 and ",single-tree," in out


def test_benchmark_grid_size(tmp_path, monkeypatch):
    import subgroup_audit.cli as cli
    seen = {}

    def fake(config):
        seen["grid"] = config.grid
        return []
    monkeypatch.setattr(cli, "run_benchmark", fake)
    code, _, _ = run("benchmark", "--rho", "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4", "--w", 24,
                     "--runs", 20)
    assert code == 0 and len(seen["grid"]) == 8


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    text = capsys.readouterr().out
    assert __version__ in text and "methodology" in text
