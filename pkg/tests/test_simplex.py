import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kwelab.errors import NumericError
from kwelab.simplex import (resolvent_integral, simplex_integral, simplex_integral_expm, tree_phases,
                            tree_time_factor)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=5), st.floats(0.05, 3.0))
def test_closed_form_matches_matrix_exponential(e, t):
    a = complex(simplex_integral(e, t))
    b = simplex_integral_expm(e, t)
    assert abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_zero_phases_give_simplex_volume():
    for m in range(1, 5):
        assert complex(simplex_integral(np.zeros(m + 1), 0.7)) == pytest.approx(0.7**m / math.factorial(m))


def test_confluent_nodes_are_stable():
    e = np.array([1.0, 1.0 + 1e-9, 1.0 - 1e-9, 4.0])
    assert complex(simplex_integral(e, 1.3)) == pytest.approx(simplex_integral_expm(e, 1.3), rel=1e-6)


def test_single_factor_resolvent():
    for e1 in (-3.0, 0.0, 2.5):
        assert resolvent_integral([e1], 0.8) == pytest.approx(np.exp(-0.8j * e1), abs=1e-8)


def test_resolvent_three_factors_and_eta():
    rng = np.random.default_rng(1)
    for _ in range(10):
        e = rng.uniform(-10, 10, size=3)
        a = complex(simplex_integral(e, 0.9))
        assert resolvent_integral(e, 0.9) == pytest.approx(a, rel=1e-6)
        assert resolvent_integral(e, 0.9, eta=3.0) == pytest.approx(a, rel=1e-6)
    with pytest.raises(NumericError):
        resolvent_integral([1.0], 1.0, eta=-1.0)


def test_tree_phases():
    assert tree_phases([1.0, 2.0, 3.0]).tolist() == [6.0, 5.0, 3.0, 0.0]
    assert complex(tree_time_factor([0.0], 0.4)) == pytest.approx(0.4)
