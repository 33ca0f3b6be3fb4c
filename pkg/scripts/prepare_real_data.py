"""Extract trimmed Adult Income and COMPAS CSVs for the real-data checks.

Both raw files ship inside the ``responsibly`` wheel (0.1.x):

    pip download responsibly==0.1.2 --no-deps -d /tmp/wheel
    python scripts/prepare_real_data.py /tmp/wheel/responsibly-0.1.2-py3-none-any.whl tests/data

The source may also be a directory containing ``adult.data``,
``adult.test`` and ``compas-scores-two-years.csv``.
"""

import argparse
import csv
import io
import json
import os
import sys
import zipfile

ADULT_COLS = ["age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
              "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
              "hours-per-week", "native-country", "income"]
ADULT_KEEP = ["age", "relationship", "sex", "race", "marital-status"]


def _reader(source):
    if os.path.isdir(source):
        files = {}
        for root, _, names in os.walk(source):
            for n in names:
                files.setdefault(n, os.path.join(root, n))

        def read(name):
            with open(files[name], encoding="utf-8") as fh:
                return fh.read()
        return read
    zf = zipfile.ZipFile(source)
    index = {os.path.basename(n): n for n in zf.namelist()}

    def read(name):
        return zf.read(index[name]).decode("utf-8")
    return read


def adult_rows(read):
    for name in ("adult.data", "adult.test"):
        for rec in csv.reader(io.StringIO(read(name)), skipinitialspace=True):
            if len(rec) != len(ADULT_COLS):
                continue  # blank lines and the "|1x3 Cross validator" banner
            row = dict(zip(ADULT_COLS, (v.strip() for v in rec)))
            label = row["income"].rstrip(".")
            yield [row[c] for c in ADULT_KEEP] + ["1" if label == ">50K" else "0"]


def compas_rows(read):
    for row in csv.DictReader(io.StringIO(read("compas-scores-two-years.csv"))):
        # the usual two-year recidivism filter
        if row["days_b_screening_arrest"] == "":
            continue
        if not -30 <= int(float(row["days_b_screening_arrest"])) <= 30:
            continue
        if row["is_recid"] == "-1" or row["c_charge_degree"] == "O" or row["score_text"] == "N/A":
            continue
        pred = "0" if row["score_text"] == "Low" else "1"
        yield [row["race"], pred, row["two_year_recid"]]


def write(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        n = 0
        for r in rows:
            w.writerow(r)
            n += 1
    return n


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="responsibly wheel or directory with the raw files")
    ap.add_argument("outdir")
    args = ap.parse_args(argv)
    read = _reader(args.source)
    os.makedirs(args.outdir, exist_ok=True)
    n = write(os.path.join(args.outdir, "adult.csv"), ADULT_KEEP + ["income"], adult_rows(read))
    with open(os.path.join(args.outdir, "adult.schema.json"), "w") as fh:
        json.dump({"columns": {"age": "continuous", "relationship": "categorical",
                               "sex": "categorical", "race": "categorical",
                               "marital-status": "categorical", "income": "outcome"}}, fh, indent=2)
    print(f"adult.csv: {n} rows")
    n = write(os.path.join(args.outdir, "compas.csv"), ["race", "high_risk", "two_year_recid"],
              compas_rows(read))
    with open(os.path.join(args.outdir, "compas.schema.json"), "w") as fh:
        json.dump({"columns": {"race": "categorical", "high_risk": "prediction",
                               "two_year_recid": "truth"}}, fh, indent=2)
    print(f"compas.csv: {n} rows")
    return 0


if __name__ == "__main__":
    sys.exit(main())
