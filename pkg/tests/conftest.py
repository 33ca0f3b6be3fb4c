import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from subgroup_audit.data import CATEGORICAL, CONTINUOUS, AttributeSchema, AuditDataset

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


def toy_dataset(n=400, seed=0, with_truth=False, effect=0.3):
    """Two categorical and one continuous attribute; y depends on color."""
    rng = np.random.default_rng(seed)
    color = rng.integers(0, 3, n)
    shape = rng.integers(0, 2, n)
    size = rng.uniform(0, 10, n)
    p = 0.4 + effect * (color == 2)
    y = (rng.random(n) < p).astype(int)
    schema = [AttributeSchema("color", CATEGORICAL, ("red", "green", "blue")),
              AttributeSchema("shape", CATEGORICAL, ("round", "square")),
              AttributeSchema("size", CONTINUOUS)]
    truth = (rng.random(n) < 0.5).astype(int) if with_truth else None
    return AuditDataset(schema, {"color": color, "shape": shape, "size": size}, y, truth,
                        name="toy")


@pytest.fixture
def toy():
    return toy_dataset()


def golden(name, text):
    """Compare ``text`` with tests/golden/<name>; UPDATE_GOLDEN=1 rewrites it."""
    path = GOLDEN / name
    if os.environ.get("UPDATE_GOLDEN") == "1" or not path.exists():
        path.write_text(text, encoding="utf-8")
    assert text == path.read_text(encoding="utf-8")


# ------------------------------------------------------- acceptance summary
CRITERIA = {}


@pytest.fixture
def record_criterion():
    """``record_criterion(n, ok, detail)`` stores a one-line verdict."""
    def record(number, ok, detail):
        CRITERIA[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
