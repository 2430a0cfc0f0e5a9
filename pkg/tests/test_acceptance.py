"""Acceptance criteria A1-A9, each reporting one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
A2 takes about 13 minutes and A7 about 70 minutes on one core.
"""
import math
import sys
import time

import numpy as np
import pytest

from kwelab.amplitudes import diagram_sum
from kwelab.duhamel import iterate_moments
from kwelab.kwe import (collision_at, collision_on_lattice, constant_density, conservation_report, density_from_profile,
                        kinetic_comparison, main_term_sum, rayleigh_jeans_density)
from kwelab.lattice import counting_exponents
from kwelab.nls_solver import StrangSolver, plane_wave, plane_wave_exact, run_ensemble
from kwelab.params_grid import TorusGrid, make_params
from kwelab.random_data import bump_profile, complex_gaussians, wick_expectation
from kwelab.simplex import resolvent_integral, simplex_integral
from kwelab.spanning import exhaustive_check

try:
    from conftest import record
except ImportError:  # imported as a package module
    from tests.conftest import record


def _random_monomial(rng):
    deg = int(rng.integers(1, 7))
    if rng.random() < 0.7 and deg >= 2:
        # balanced: half conjugated, frequencies shuffled so pairings vary
        h = deg // 2
        ks = rng.integers(0, 3, size=h).tolist()
        kc = list(ks)
        if rng.random() < 0.3:
            kc[0] = int(rng.integers(0, 3))
        rng.shuffle(kc)
        ks, conj = ks + kc, [False] * h + [True] * h
    else:
        ks = rng.integers(0, 3, size=deg).tolist()
        conj = (rng.random(deg) < 0.5).tolist()
    return ks, conj


def test_A1_wick_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    draws = 100_000
    G = complex_gaussians(rng, (draws, 3))
    worst, nonzero = 0.0, 0
    for _ in range(50):
        ks, conj = _random_monomial(rng)
        x = np.ones(draws, dtype=complex)
        for k, c in zip(ks, conj):
            x *= np.conj(G[:, k]) if c else G[:, k]
        exact = wick_expectation(ks, conj)
        nonzero += exact != 0
        se = math.sqrt(np.mean(np.abs(x - x.mean()) ** 2) / draws)
        worst = max(worst, abs(x.mean() - exact) / se)
    g4 = wick_expectation([5, 5, 5, 5], [False, False, True, True])
    ok = worst <= 3.0 and g4 == 2
    record("A1", ok, f"worst |MC - oracle|/stderr = {worst:.2f} over 50 monomials ({nonzero} nonzero), "
                     f"E|G|^4 = {g4}, {time.perf_counter() - t0:.1f}s")
    assert g4 == 2
    assert worst <= 3.0


def test_A2_expansion_vs_diagrams():
    t0 = time.perf_counter()
    params = make_params(1 / 16, 0.3)
    profile = bump_profile()
    times = [0.1, 0.5]
    mc = iterate_moments(params, TorusGrid(2, 99, params.eps), profile, 1, times, 1000, seed=7,
                         quadrature_dt=params.t_lin / 5, rule="simpson")
    ds = diagram_sum(1, times, params, profile, methods=("time", "resolvent"))
    z = []
    for i, t in enumerate(times):
        z.append(abs(mc.mean[1, i] - ds.total[("time", t)].real) / mc.stderr[1, i])
    rel = 0.0
    for _, _, _, vals, _ in ds.rows:
        for t in times:
            a, b = vals[("time", t)], vals[("resolvent", t)]
            rel = max(rel, abs(a - b) / abs(a))
    ok = max(z) <= 3.0 and rel <= 1e-6
    detail = ", ".join(f"t={t}: MC {mc.mean[1, i]:.6g}+-{mc.stderr[1, i]:.2g} vs sum {ds.total[('time', t)].real:.6g}"
                       for i, t in enumerate(times))
    record("A2", ok, f"{detail}; max z = {max(z):.2f}; time/resolvent max rel {rel:.1e}; "
                     f"{time.perf_counter() - t0:.0f}s")
    assert max(z) <= 3.0
    assert rel <= 1e-6


@pytest.fixture(scope="module")
def exhaustive_reports():
    return {n: exhaustive_check(n) for n in (1, 2, 3)}


def test_A3_spanning_exactness(exhaustive_reports):
    reps = exhaustive_reports
    ok = all(r.spanning_ok for r in reps.values())
    detail = "; ".join(f"n={n}: {r.configurations} configs, free-count {r.bad_free_count}, kirchhoff {r.bad_kirchhoff}, "
                       f"coeff {r.bad_coeff_range}, time-order {r.bad_time_order} failures" for n, r in reps.items())
    record("A3", ok, detail)
    assert ok


def test_A4_counting_identities(exhaustive_reports):
    reps = exhaustive_reports
    ok = all(r.counting_ok for r in reps.values())
    detail = "; ".join(f"n={n}: counting {r.bad_counting}, first-degree {r.bad_first_degree}, "
                       f"degree-one first vertex {r.first_degree_one} (undetected degeneracy "
                       f"{r.first_degree_one_without_degeneracy})" for n, r in reps.items())
    record("A4", ok, detail)
    assert ok


def test_A5_resolvent_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for m in range(1, 5):
        for _ in range(25):
            e = rng.uniform(-10, 10, size=m)
            t = float(rng.uniform(0.1, 2.0))
            a = complex(simplex_integral(e, t))
            b = resolvent_integral(e, t)
            worst = max(worst, abs(a - b) / abs(a))
    ok = worst <= 1e-6
    record("A5", ok, f"max relative gap {worst:.2e} over 100 tuples, m=1..4, {time.perf_counter() - t0:.1f}s")
    assert ok


def test_A6_collision_operator():
    t0 = time.perf_counter()
    pts = np.array([[0.1, 0.2], [-0.3, 0.05], [0.25, -0.25], [0.0, 0.4]])
    vc, _ = collision_at(constant_density(1.0), pts, 1 / 16, domain=(0.0, 1.0))
    rj_pts = np.array([[0.6, 0.3], [-0.5, 0.7], [0.9, 0.0]])
    vr, _ = collision_at(rayleigh_jeans_density(1.0), rj_pts, 1 / 16, domain=(0.25, 2.0))
    rep = conservation_report(density_from_profile(bump_profile(), 1 / 8))
    ok = (np.abs(vc).max() <= 1e-8 and np.abs(vr).max() <= 1e-8
          and rep["mass_rel"] <= 1e-6 and rep["energy_rel"] <= 1e-6)
    record("A6", ok, f"max|C[const]| {np.abs(vc).max():.1e}, max|C[RJ]| {np.abs(vr).max():.1e}, "
                     f"mass rel {rep['mass_rel']:.1e}, energy rel {rep['energy_rel']:.1e}, "
                     f"{time.perf_counter() - t0:.0f}s")
    assert ok


def _half_max_reps(params, profile):
    """Octant representatives 0 <= k2 <= k1 of frequencies with A(eps k)^2 >= max/2, with orbit sizes."""
    K = int(profile.support_radius / params.eps) + 1
    reps, weights = [], []
    amax = profile(np.zeros((params.d, 1)))[0] ** 2
    for k1 in range(0, K + 1):
        for k2 in range(0, k1 + 1):
            a = profile(params.eps * np.array([[k1], [k2]], dtype=float))[0] ** 2
            if a >= 0.5 * amax:
                reps.append((k1, k2))
                orbit = {(s1 * x, s2 * y) for (x, y) in ((k1, k2), (k2, k1)) for s1 in (1, -1) for s2 in (1, -1)}
                weights.append(len(orbit))
    return np.array(reps, dtype=np.int64), np.array(weights, dtype=float)


def test_A7_kinetic_prediction():
    t0 = time.perf_counter()
    profile = bump_profile()
    ratios, notes = {}, []
    for eps, M in ((1 / 16, 65), (1 / 32, 135)):
        params = make_params(eps, 0.45)
        t = max(params.lam**-2, 0.1)
        ens = run_ensemble(params, TorusGrid(2, M, eps), profile, 1000, [t], seed=11, batch_size=16,
                           first_order_control=True)
        rep = kinetic_comparison(ens, params, profile, t)
        ratios[eps] = rep.ratio
        notes.append(f"eps=1/{round(1 / eps)}: ratio {rep.ratio:.4f} (noise l1 {rep.l1_noise / (t / params.t_kin):.4f})")
    decreasing = ratios[1 / 32] < ratios[1 / 16]

    params = make_params(1 / 32, 0.45)
    t = max(params.lam**-2, 0.1)
    ks, w = _half_max_reps(params, profile)
    main = main_term_sum(params, profile, t, ks)
    pred = params.eps**params.d * (t / params.t_kin) * collision_on_lattice(params, profile, ks)
    dev = float(np.sum(w * np.abs(main - pred)) / np.sum(w * np.abs(pred)))
    ok = decreasing and dev < 0.2
    record("A7", ok, "; ".join(notes) + f"; main term vs kinetic at eps=1/32: relative l1 {dev:.3f} "
                                        f"on {int(w.sum())} half-max frequencies; {time.perf_counter() - t0:.0f}s")
    assert decreasing
    assert dev < 0.2


def test_A8_nls_solver():
    t0 = time.perf_counter()
    grid = TorusGrid(2, 15)
    k0, a, lam = (2, -1), 0.7 + 0.2j, 1.3
    u = StrangSolver(grid, lam, 1e-3).evolve(plane_wave(grid, k0, a).coeffs, 1000)
    exact = plane_wave_exact(grid, k0, a, lam, 1.0).coeffs
    pw_err = float(np.max(np.abs(u - exact)) / (2 * np.pi))

    rng = np.random.default_rng(3)
    grid = TorusGrid(2, 31)
    c0 = np.zeros(grid.shape, dtype=complex)
    ks = grid.wavevectors()
    low = (np.abs(ks).max(axis=0) <= 3)
    c0[low] = (rng.standard_normal(low.sum()) + 1j * rng.standard_normal(low.sum())) * 0.3
    m0 = np.sum(np.abs(c0) ** 2)
    # long double isolates the splitting; in double the FFT round trip alone drifts ~1e-16 per step
    c = StrangSolver(grid, 2.0, 1e-3, precision="extended").evolve(c0, 10_000)
    drift = float(abs(np.sum(np.abs(c) ** 2) - m0) / m0)
    c = StrangSolver(grid, 2.0, 1e-3).evolve(c0, 10_000)
    drift_double = float(abs(np.sum(np.abs(c) ** 2) - m0) / m0)

    T, lam = 0.5, 1.5
    ref = StrangSolver(grid, lam, T / 800).evolve(c0, 800)
    errs = [float(np.sqrt(np.sum(np.abs(StrangSolver(grid, lam, T / n).evolve(c0, n) - ref) ** 2)))
            for n in (50, 100)]
    order = math.log2(errs[0] / errs[1])
    ok = pw_err < 1e-8 and drift < 1e-12 and 1.8 <= order <= 2.2
    record("A8", ok, f"plane-wave error {pw_err:.1e}, mass drift {drift:.1e} over 1e4 steps "
                     f"(double-precision FFTs: {drift_double:.1e}), observed order "
                     f"{order:.3f}, {time.perf_counter() - t0:.1f}s")
    assert pw_err < 1e-8
    assert drift < 1e-12
    assert 1.8 <= order <= 2.2


def test_A9_lattice_counting():
    t0 = time.perf_counter()
    r = counting_exponents()
    e1, e2 = r["exponent_one"], r["exponent_two"]
    ok = abs(e1 + 1) <= 0.3 and abs(e2 + 2) <= 0.3
    record("A9", ok, f"degree-one exponent {e1:.3f} (counts {r['one']}), degree-two exponent {e2:.3f} "
                     f"(counts {r['two']}), {time.perf_counter() - t0:.1f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
