"""First Duhamel iterate: Monte Carlo against the sum over paired diagrams.

At eps = 1/4 the six order-one diagrams are summed exactly over the data
support, by the time-simplex formula and by the resolvent contour integral,
and compared with the ensemble average of ||u^1(t)||^2.
"""
from kwelab.amplitudes import diagram_sum
from kwelab.duhamel import iterate_moments
from kwelab.params_grid import TorusGrid, make_params
from kwelab.random_data import bump_profile

params = make_params(1 / 4, 0.3)
profile = bump_profile()
times = [0.1, 0.5]
ds = diagram_sum(1, times, params, profile, methods=("time", "resolvent"))
for hl, hr, idx, vals, rt in ds.rows:
    print(f"histories {hl}|{hr} pairing {idx}: " + ", ".join(
        f"{m}@{t}: {v.real:+.6e}" for (m, t), v in sorted(vals.items())))

mc = iterate_moments(params, TorusGrid(2, 25, params.eps), profile, 1, times, 2000, seed=0,
                     quadrature_dt=params.t_lin / 10, rule="simpson")
for i, t in enumerate(times):
    print(f"t={t}: Monte Carlo {mc.mean[1, i]:.6f} +- {mc.stderr[1, i]:.6f}   "
          f"diagram sum {ds.total[('time', t)].real:.6f}   resolvent {ds.total[('resolvent', t)].real:.6f}")
