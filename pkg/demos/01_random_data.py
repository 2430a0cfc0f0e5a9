"""Random initial data and the Wick oracle.

Draws the Gaussian field, compares its average mass with the exact value and
checks a few Gaussian moments against exhaustive pairing counts.
"""
import numpy as np

from kwelab.params_grid import grid_for, make_params
from kwelab.random_data import InitialDataSampler, bump_profile, complex_gaussians, expected_mass, wick_expectation

params = make_params(1 / 8, 0.3)
profile = bump_profile()
grid = grid_for(params.eps, profile.support_radius)
print(f"eps={params.eps}, lambda={params.lam:.4f}, T_lin={params.t_lin:.4g}, T_nonlin={params.t_nonlin:.4g}, "
      f"T_kin={params.t_kin:.4g}, grid M={grid.M}")

sampler = InitialDataSampler(params, grid, profile)
masses = np.array([np.sum(np.abs(sampler.coeffs(s)) ** 2) for s in range(2000)])
print(f"mean ||u0||^2 over 2000 draws: {masses.mean():.5f} +- {masses.std(ddof=1) / np.sqrt(len(masses)):.5f}"
      f"   exact {expected_mass(params, profile):.5f}")

rng = np.random.default_rng(1)
G = complex_gaussians(rng, (200_000, 2))
for ks, conj in [([0, 0], [False, True]), ([0, 0, 0, 0], [False, False, True, True]),
                 ([0, 1, 0, 1], [False, False, True, True]), ([0] * 6, [False] * 3 + [True] * 3)]:
    x = np.ones(len(G), complex)
    for k, c in zip(ks, conj):
        x *= np.conj(G[:, k]) if c else G[:, k]
    print(f"E[{' '.join(('G~' if c else 'G') + str(k) for k, c in zip(ks, conj))}] = "
          f"{wick_expectation(ks, conj)}   (Monte Carlo {x.mean().real:.3f})")
