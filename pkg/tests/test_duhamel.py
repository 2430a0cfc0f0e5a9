import itertools

import numpy as np
import pytest

from kwelab.amplitudes import iterate_from_diagrams
from kwelab.duhamel import (IterateSet, _SourceBuilder, bilinear_pairing, compute_iterates, compute_iterates_array,
                            error_term, iterate_moment_L2, smooth_cutoff, truncated_product, wick_phase)
from kwelab.params_grid import FourierField, TorusGrid, make_params
from kwelab.random_data import bump_profile, expected_mass


def _field(g, coeffs):
    c = np.zeros(g.shape, dtype=complex)
    for k, v in coeffs.items():
        c[g.index_of(k)] = v
    return FourierField(g, c)


def _random_small(g, rng, radius=2):
    return _field(g, {k: rng.standard_normal() + 1j * rng.standard_normal()
                      for k in itertools.product(range(-radius, radius + 1), repeat=g.d)})


def _brute_truncated(a, b, c):
    g = a.grid
    d = g.d
    out = {}
    sup = lambda f: [tuple(k) for k in g.wavevectors().reshape(d, -1).T if f[tuple(k)] != 0]
    for k1 in sup(a):
        for k2 in sup(b):
            for k3 in sup(c):
                trunc = 1 - (not any(x + y for x, y in zip(k1, k2))) - (not any(x + y for x, y in zip(k2, k3)))
                k = tuple(x + y + z for x, y, z in zip(k1, k2, k3))
                out[k] = out.get(k, 0) + trunc * a[k1] * b[k2] * c[k3] / (2 * np.pi) ** d
    return out


def test_truncated_product_single_modes():
    g = TorusGrid(2, 15)
    a, b, c = (_field(g, {k: 1.0}) for k in [(1, 0), (0, 2), (1, 1)])
    p = truncated_product(a, b, c)
    nz = np.argwhere(np.abs(p.coeffs) > 1e-12)
    assert [tuple(x) for x in nz] == [g.index_of((2, 3))]
    assert p[(2, 3)] == pytest.approx(1 / (2 * np.pi) ** 2)
    b = _field(g, {(-1, 0): 1.0})
    assert np.abs(truncated_product(a, b, c).coeffs).max() < 1e-14


def test_truncated_product_matches_convolution():
    rng = np.random.default_rng(0)
    g = TorusGrid(2, 15)
    a, b, c = (_random_small(g, rng) for _ in range(3))
    p = truncated_product(a, b, c)
    ref = _field(g, _brute_truncated(a, b, c))
    assert np.abs(p.coeffs - ref.coeffs).max() < 1e-12


def test_product_decomposition_identity():
    rng = np.random.default_rng(1)
    g = TorusGrid(2, 15)
    a, b, c = (_random_small(g, rng) for _ in range(3))
    d = g.d
    lhs = a.to_samples() * b.to_samples() * c.to_samples()
    ab = bilinear_pairing(a.coeffs, b.coeffs, d)
    bc = bilinear_pairing(b.coeffs, c.coeffs, d)
    rhs = truncated_product(a, b, c).to_samples() + (ab * c.to_samples() + bc * a.to_samples()) / (2 * np.pi) ** d
    assert np.abs(lhs - rhs).max() < 1e-10 * np.abs(lhs).max()


def test_truncated_product_trilinear():
    rng = np.random.default_rng(2)
    g = TorusGrid(2, 15)
    a, b, c, a2 = (_random_small(g, rng) for _ in range(4))
    alpha = 0.3 - 1.7j
    lhs = truncated_product(FourierField(g, alpha * a.coeffs + a2.coeffs), b, c).coeffs
    rhs = alpha * truncated_product(a, b, c).coeffs + truncated_product(a2, b, c).coeffs
    assert np.abs(lhs - rhs).max() < 1e-13


def test_wick_phase_examples():
    g = TorusGrid(2, 9)
    u = _field(g, {(0, 0): 2 * np.pi})   # ||u||^2 = (2 pi)^2
    assert wick_phase(u, 0.0) == 0.0
    assert wick_phase(u, 1.0) == pytest.approx(-2.0)
    assert wick_phase(u, 0.6) == pytest.approx(2 * wick_phase(u, 0.3))


def test_smooth_cutoff():
    assert smooth_cutoff(np.array([0.0, 0.9, 1.0]))[:3].tolist() == [1.0, 1.0, 1.0]
    assert smooth_cutoff(np.array([2.0, 3.0])).tolist() == [0.0, 0.0]
    mid = smooth_cutoff(np.linspace(1, 2, 50))
    assert np.all(np.diff(mid) <= 0)


@pytest.fixture(scope="module")
def tiny():
    g = TorusGrid(2, 13)
    rng = np.random.default_rng(1)
    sup = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]
    u0 = _field(g, {k: rng.standard_normal() + 1j * rng.standard_normal() for k in sup})
    return g, u0, sup


def test_free_iterate_and_initial_values(tiny):
    g, u0, _ = tiny
    its = compute_iterates(u0, 2, [0.0, 0.2], 1e-3, 0.8)
    assert np.allclose(np.abs(its.coeffs[0][1]), np.abs(u0.coeffs), atol=1e-14)
    for n in (1, 2):
        assert not np.any(its.coeffs[n][0])


@pytest.mark.parametrize("n", [1, 2])
def test_iterates_match_tree_expansion(tiny, n):
    g, u0, sup = tiny
    lam, t = 0.8, 0.3
    ref = _field(g, iterate_from_diagrams(lambda k: u0[k], n, t, lam, 2, sup)).coeffs
    errs = []
    for h in (1e-3, 5e-4):
        its = compute_iterates(u0, n, [t], h, lam, rule="trapezoid")
        errs.append(np.abs(its.coeffs[n][0] - ref).max())
    assert errs[1] < 1e-5 * np.abs(ref).max()
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)


def test_simpson_variant_more_accurate(tiny):
    g, u0, sup = tiny
    ref = _field(g, iterate_from_diagrams(lambda k: u0[k], 1, 0.3, 0.8, 2, sup)).coeffs
    trap = compute_iterates(u0, 1, [0.3], 1e-3, 0.8).coeffs[1][0]
    simp = compute_iterates(u0, 1, [0.3], 1e-3, 0.8, rule="simpson").coeffs[1][0]
    assert np.abs(simp - ref).max() < 0.01 * np.abs(trap - ref).max()


def test_lambda_scaling(tiny):
    g, u0, _ = tiny
    a = compute_iterates(u0, 2, [0.2], 1e-3, 0.7)
    b = compute_iterates(u0, 2, [0.2], 1e-3, 1.4)
    for n in range(3):
        assert np.abs(b.coeffs[n][0] - 2 ** (2 * n) * a.coeffs[n][0]).max() < 1e-12 * 4**n


def test_iterates_solve_forced_equation(tiny):
    g, u0, _ = tiny
    lam, h = 0.8, 2e-4
    times = [0.2 - h, 0.2, 0.2 + h]
    its = compute_iterates(u0, 2, times, h / 4, lam, rule="simpson")
    sb = _SourceBuilder(g)
    for n in (1, 2):
        dt = (its.coeffs[n][2] - its.coeffs[n][0]) / (2 * h)
        cs = [its.coeffs[m][1] for m in range(n)]
        src = sb.source(n, cs, [sb.phys(c) for c in cs])
        resid = 1j * dt - g.ksq() * its.coeffs[n][1] - lam**2 * src
        assert np.abs(resid).max() < 1e-5 * np.abs(lam**2 * src).max()


def test_error_term_zero_order_and_zero():
    rng = np.random.default_rng(4)
    g = TorusGrid(2, 15)
    u = _random_small(g, rng, 1)
    lam = 0.9
    its = IterateSet(0, np.array([0.0]), [[u.coeffs]], g, lam, u.norm2())
    e = error_term(its, 0)
    x = u.to_samples()
    direct = -x * np.conj(x) * x + 2 / (2 * np.pi) ** 2 * u.norm2() * x
    ref = lam**2 * FourierField(g, np.fft.fftn(direct) * (2 * np.pi) / g.M**2).coeffs
    assert np.abs(e.coeffs - ref).max() < 1e-12 * np.abs(ref).max()
    zero = IterateSet(2, np.array([0.0]), [[np.zeros(g.shape, complex)] for _ in range(3)], g, lam, 0.0)
    assert not np.any(error_term(zero, 0).coeffs)


def test_zeroth_moment_matches_expected_mass():
    p = make_params(1 / 4, 0.3)
    g = TorusGrid(2, 25, p.eps)
    mean, se = iterate_moment_L2(p, g, bump_profile(), 0, 0.125, 400, quadrature_dt=p.t_lin / 4)
    assert abs(mean - expected_mass(p, bump_profile())) < 3 * se
