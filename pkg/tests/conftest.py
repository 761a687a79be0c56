import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from doublemetrics.generators import random_cross, random_space  # noqa: E402

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@st.composite
def spaces(draw, max_n=6):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, max_n))
    return random_space(np.random.default_rng(seed), n)


@st.composite
def cross_metrics(draw, max_n=6, count=1):
    """``count`` random valid cross metrics on one shared random space."""
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, max_n))
    rng = np.random.default_rng(seed)
    space = random_space(rng, n)
    out = [random_cross(rng, space) for _ in range(count)]
    return out[0] if count == 1 else out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
