from pathlib import Path

import numpy as np
import pytest

from metaactive.data import BaseDataset, load_dataset

ROOT = Path(__file__).resolve().parents[1]
LETTER = ROOT / "data" / "letter-recognition.csv"


@pytest.fixture(scope="session")
def letter():
    return load_dataset(LETTER)


@pytest.fixture
def blobs():
    """Six well-separated 2-d classes, 30 points each."""
    rng = np.random.default_rng(0)
    centers = np.array([[0, 0], [10, 0], [0, 10], [10, 10], [20, 0], [0, 20]], dtype=float)
    X = np.concatenate([c + 0.5 * rng.normal(size=(30, 2)) for c in centers])
    y = np.repeat(np.arange(6), 30)
    return BaseDataset(X, y, tuple(f"b{i}" for i in range(6)), name="blobs")


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str, report_only: bool = False) -> str:
    status = "REPORT" if report_only else ("PASS" if passed else "FAIL")
    if report_only:
        status += " (directional " + ("holds" if passed else "does not hold") + ")"
    line = f"criterion {criterion}: {status} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
