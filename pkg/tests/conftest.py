import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from riskconv.probspace import Partition, rv

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

X4 = (-4, -2, 1, 3)

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def x4():
    return rv(X4)


@pytest.fixture
def x4_exact():
    return rv(X4, exact=True)


# -- strategies --------------------------------------------------------------------------

small_ints = st.integers(min_value=-20, max_value=20)
values = st.floats(min_value=-50, max_value=50, allow_nan=False, allow_infinity=False)


@st.composite
def float_vectors(draw, min_size=1, max_size=10):
    return draw(st.lists(values, min_size=min_size, max_size=max_size))


@st.composite
def probability_vectors(draw, n):
    w = draw(st.lists(st.integers(min_value=1, max_value=9), min_size=n, max_size=n))
    w = np.asarray(w, dtype=float)
    return w / w.sum()


@st.composite
def partitions(draw, n):
    k = draw(st.integers(min_value=1, max_value=n))
    labels = draw(st.lists(st.integers(min_value=0, max_value=k - 1), min_size=n, max_size=n))
    return Partition.from_labels(labels)
