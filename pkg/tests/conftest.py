import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from changestream import StatTable  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"

# the hand-worked N=4 table
GC_EXAMPLE = {(0, 1): 0.1, (0, 2): 0.9, (0, 3): 0.8, (1, 2): 1.0, (1, 3): 0.7, (2, 3): 0.2}


def table_from_dict(values: dict, n: int, h: dict | None = None) -> StatTable:
    p = np.zeros((n, n))
    for (t, u), v in values.items():
        p[t, u] = v
    harr = None
    if h is not None:
        d = len(next(iter(h.values())))
        harr = np.zeros((n, n, d))
        for (t, u), v in h.items():
            harr[t, u] = v
    return StatTable.from_arrays(p, harr)


@pytest.fixture
def gc_example() -> StatTable:
    # cut reps at kappa=2 are (1,0),(1,0),(0,1),(0,1); the others are arbitrary
    h = {(0, 2): (1.0, 0.0), (0, 3): (1.0, 0.0), (1, 2): (0.0, 1.0), (1, 3): (0.0, 1.0),
         (0, 1): (0.6, 0.8), (2, 3): (-1.0, 0.0)}
    return table_from_dict(GC_EXAMPLE, 4, h)


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULT_LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
