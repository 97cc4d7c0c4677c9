import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from cbci import Atomic, ThorinPair

settings.register_profile("default", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@st.composite
def atomic_measures(draw, min_atoms=1, max_atoms=6, lo=0.1, hi=10.0):
    """Atomic measures with well separated locations."""
    n = draw(st.integers(min_atoms, max_atoms))
    xs = draw(st.lists(st.floats(lo, hi), min_size=n, max_size=n, unique=True))
    xs = sorted(xs)
    if any(b - a < 1e-3 * b for a, b in zip(xs, xs[1:])):
        xs = list(np.linspace(lo, hi, n + 1)[1:] * draw(st.floats(0.3, 1.0)))
    ws = draw(st.lists(st.floats(0.1, 10.0), min_size=n, max_size=n))
    return Atomic(tuple(ws), tuple(xs))


@pytest.fixture
def two_atom():
    return Atomic((1.0, 1.0), (1.0, 2.0))


@pytest.fixture
def two_atom_pair(two_atom):
    return ThorinPair(0.0, two_atom)
