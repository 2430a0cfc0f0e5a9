import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kwelab.params_grid import TorusGrid, make_params
from kwelab.random_data import (InitialDataSampler, bump_profile, complex_gaussians, expected_mass,
                                sample_initial_data, wick_expectation, zero_profile)


def test_wick_examples():
    assert wick_expectation([3], [True]) == 0
    assert wick_expectation([3, 3], [False, True]) == 1
    assert wick_expectation([0, 0, 0, 0], [False, False, True, True]) == 2
    assert wick_expectation([1, 2, 3], [False, False, True]) == 0
    assert wick_expectation([(1, 0), (0, 1)], [False, True]) == 0
    # E|G|^6 = 3!
    assert wick_expectation([7] * 6, [False] * 3 + [True] * 3) == 6


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.booleans()), min_size=1, max_size=6), st.randoms())
def test_wick_permutation_invariance(slots, rnd):
    ks, conj = zip(*slots)
    perm = list(range(len(slots)))
    rnd.shuffle(perm)
    assert wick_expectation([ks[i] for i in perm], [conj[i] for i in perm]) == wick_expectation(ks, conj)


def test_wick_matches_brute_force_pairings():
    ks = [0, 1, 0, 0, 1, 0]
    conj = [False, False, False, True, True, True]
    plain = [k for k, c in zip(ks, conj) if not c]
    bar = [k for k, c in zip(ks, conj) if c]
    brute = sum(all(p == bar[s] for p, s in zip(plain, perm)) for perm in itertools.permutations(range(3)))
    assert wick_expectation(ks, conj) == brute == 2


def test_gaussian_convention():
    g = complex_gaussians(np.random.default_rng(0), 200_000)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(g * g)) < 0.01


def test_zero_profile_and_determinism():
    p = make_params(1 / 4, 0.3)
    g = TorusGrid(2, 21, p.eps)
    assert not np.any(sample_initial_data(p, g, zero_profile(), 3).coeffs)
    a = sample_initial_data(p, g, bump_profile(), 3).coeffs
    b = sample_initial_data(p, g, bump_profile(), 3).coeffs
    assert np.array_equal(a, b)


def test_seed_independent_of_grid_size():
    p = make_params(1 / 4, 0.3)
    small, big = TorusGrid(2, 11, p.eps), TorusGrid(2, 21, p.eps)
    a = sample_initial_data(p, small, bump_profile(), 5)
    b = sample_initial_data(p, big, bump_profile(), 5)
    for k in [(0, 0), (1, -2), (3, 0)]:
        assert a[k] == b[k]


def test_support_is_real_profile_inside_ball():
    p = make_params(1 / 8, 0.3)
    g = TorusGrid(2, 35, p.eps)
    c = sample_initial_data(p, g, bump_profile(), 1).coeffs
    k2 = g.ksq()
    assert not np.any(c[k2 * p.eps**2 >= 1.0])


def test_expected_mass_monte_carlo():
    p = make_params(1 / 4, 0.3)
    g = TorusGrid(2, 21, p.eps)
    s = InitialDataSampler(p, g, bump_profile())
    m = np.array([np.sum(np.abs(s.coeffs(i)) ** 2) for i in range(10_000)])
    exact = expected_mass(p, bump_profile())
    assert abs(m.mean() - exact) < 3 * m.std(ddof=1) / np.sqrt(len(m))


def test_lp_moments_stable_across_seeds():
    p = make_params(1 / 4, 0.3)
    g = TorusGrid(2, 21, p.eps)
    s = InitialDataSampler(p, g, bump_profile())
    for q in (2, 4):
        est = []
        for block in range(2):
            vals = [np.sum(np.abs(s(1000 * block + i).to_samples()) ** q) for i in range(300)]
            est.append(np.mean(vals))
        assert np.isfinite(est).all()
        assert est[0] == pytest.approx(est[1], rel=0.25)
