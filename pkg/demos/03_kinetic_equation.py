"""Collision operator, kinetic time stepping and the discrete main term.

Shows the vanishing of the collision operator on equilibria, conservation of
the weak-form quadrature, a short kinetic trajectory, and the lattice main
term against the continuum prediction at a few frequencies.
"""
import numpy as np

from kwelab.kwe import (collision_at, collision_on_lattice, conservation_report, constant_density,
                        density_from_profile, kwe_solve, main_term_sum, rayleigh_jeans_density)
from kwelab.params_grid import make_params
from kwelab.random_data import bump_profile

pts = np.array([[0.1, 0.2], [-0.3, 0.1]])
print("C[const] =", collision_at(constant_density(), pts, 1 / 16, domain=(0, 1))[0])
print("C[RJ]    =", collision_at(rayleigh_jeans_density(), pts + 0.5, 1 / 16, domain=(0.25, 2))[0])

rho = density_from_profile(bump_profile(), 1 / 4)
rep = conservation_report(rho)
print(f"weak quadrature at h=1/4: mass defect {rep['mass_rel']:.1e}, energy defect {rep['energy_rel']:.1e}")
traj = kwe_solve(rho, 0.2, 0.05)
print(f"kinetic trajectory to t'=0.2: mass drift {traj.mass_drift:.1e}, energy drift {traj.energy_drift:.1e}, "
      f"peak {traj.states[0].values.max():.4f} -> {traj.states[-1].values.max():.4f}")

params = make_params(1 / 16, 0.45)
t = 0.1
ks = np.array([[0, 0], [2, 0], [4, 2], [6, 0]])
main = main_term_sum(params, bump_profile(), t, ks)
pred = params.eps**2 * (t / params.t_kin) * collision_on_lattice(params, bump_profile(), ks)
for k, a, b in zip(ks, main, pred):
    print(f"k={tuple(k)}: lattice main term {a:+.4e}   eps^d (t/T_kin) C {b:+.4e}   ratio {a / b:.3f}")
