import itertools

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from credalfilter.possibility import SupportCloud

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@st.composite
def grade_vectors(draw, min_size=1, max_size=8, normalized=True):
    n = draw(st.integers(min_size, max_size))
    g = draw(st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=n, max_size=n))
    g = np.array(g)
    if normalized:
        g[draw(st.integers(0, n - 1))] = 1.0
    return g


def line_cloud(grades):
    """Cloud on the points 0, 1, 2, ... of the real line."""
    grades = np.asarray(grades, dtype=float)
    return SupportCloud(np.arange(grades.shape[0], dtype=float), grades)


@st.composite
def clouds(draw, min_size=1, max_size=8, normalized=True):
    return line_cloud(draw(grade_vectors(min_size, max_size, normalized)))


def subsets(m):
    """Every nonempty subset of range(m), as a tuple, by brute force."""
    for r in range(1, m + 1):
        yield from itertools.combinations(range(m), r)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# (name, passed, detail) per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
