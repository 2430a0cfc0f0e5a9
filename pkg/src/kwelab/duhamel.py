"""Wick-ordered Duhamel expansion: truncated cubic product, iterates, phase and remainder."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DomainError
from .nls_solver import RunningStats, steps_for
from .params_grid import FourierField, PhysicalParams, TorusGrid
from .random_data import DataProfile, InitialDataSampler, realization_seeds


def _neg_index(x: np.ndarray, d: int) -> np.ndarray:
    """x(-k) for FFT-ordered arrays with odd M."""
    axes = tuple(range(-d, 0))
    return np.roll(np.flip(x, axis=axes), 1, axis=axes)


def bilinear_pairing(a_hat: np.ndarray, b_hat: np.ndarray, d: int) -> np.ndarray:
    """Integral of a*b over the torus, i.e. sum_k a_hat(k) b_hat(-k)."""
    axes = tuple(range(-d, 0))
    return np.sum(a_hat * _neg_index(b_hat, d), axis=axes)


def inner(a_hat: np.ndarray, b_hat: np.ndarray, d: int) -> np.ndarray:
    """<a, b> = integral of a conj(b), computed spectrally."""
    axes = tuple(range(-d, 0))
    return np.sum(a_hat * np.conj(b_hat), axis=axes)


def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise DomainError("fields live on different grids")
    return g


def truncated_product(a: FourierField, b: FourierField, c: FourierField) -> FourierField:
    """P(a, b, c) = abc - (2pi)^-d <a-bar, b> c - (2pi)^-d a <b-bar, c>.

    In Fourier variables the convolution of a_hat, b_hat, c_hat with the
    factor 1 - delta(k1 + k2) - delta(k2 + k3).  The product is formed on the
    grid, so it is exact when the three supports do not alias.
    """
    g = _check_same_grid(a, b, c)
    d = g.d
    pa, pb, pc = (f.to_samples() for f in (a, b, c))
    prod = FourierField(g, sfft.fftn(pa * pb * pc, axes=tuple(range(-d, 0))) * ((2 * np.pi) ** (d / 2) / g.M**d))
    norm = (2 * np.pi) ** (-d)
    ab = bilinear_pairing(a.coeffs, b.coeffs, d)
    bc = bilinear_pairing(b.coeffs, c.coeffs, d)
    return FourierField(g, prod.coeffs - norm * ab * c.coeffs - norm * bc * a.coeffs)


def wick_phase(u0: FourierField | float, t: float) -> float:
    """omega(t) = -2 t ||u0||^2 / (2 pi)^d.  Accepts a field or its squared norm."""
    if isinstance(u0, FourierField):
        m, d = u0.norm2(), u0.grid.d
    else:
        raise DomainError("wick_phase expects a FourierField; use wick_phase_from_mass for a number")
    return -2.0 * t * m / (2 * np.pi) ** d


def wick_phase_from_mass(mass: float, t: float, d: int) -> float:
    return -2.0 * t * mass / (2 * np.pi) ** d


def smooth_cutoff(x) -> np.ndarray:
    """chi = 1 on |x| <= 1, 0 on |x| >= 2, smooth, built from exp(-1/s)."""
    x = np.abs(np.asarray(x, dtype=float))

    def psi(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a, b = psi(2.0 - x), psi(x - 1.0)
    return a / (a + b)


class _SourceBuilder:
    """Evaluates sum_{i+j+k=n-1} P(u^i, conj u^j, u^k) on a batch of coefficient arrays."""

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        self.d = grid.d
        self.axes = tuple(range(-grid.d, 0))
        self.to_phys = grid.M**grid.d / (2 * np.pi) ** (grid.d / 2)
        self.to_coef = 1.0 / self.to_phys
        self.norm = (2 * np.pi) ** (-grid.d)

    def phys(self, c):
        return sfft.ifftn(c, axes=self.axes) * self.to_phys

    def source(self, n: int, coeffs: list, phys: list) -> np.ndarray:
        """coeffs[m], phys[m] hold u^m for m < n."""
        d = self.d
        prod = 0.0
        corr = 0.0
        for j in range(n):
            inner_sum = 0.0
            for i in range(n - j):
                k = n - 1 - j - i
                inner_sum = inner_sum + phys[i] * phys[k]
                # V(i,j) u^k + V(k,j) u^i summed over (i,k) gives 2 V(i,j) u^k by symmetry
                vij = inner(coeffs[i], coeffs[j], d)
                corr = corr + 2.0 * _bcast(vij, d) * coeffs[k]
            prod = prod + np.conj(phys[j]) * inner_sum
        return sfft.fftn(prod, axes=self.axes) * self.to_coef - self.norm * corr


def _bcast(v, d):
    v = np.asarray(v)
    return v.reshape(v.shape + (1,) * d)


@dataclass
class IterateSet:
    """Iterates u^0..u^N at the requested times.

    ``coeffs[n][i]`` holds the coefficient array of u^n at ``times[i]``;
    a leading batch axis is present when several realizations were evolved.
    """

    N: int
    times: np.ndarray
    coeffs: list
    grid: TorusGrid
    lam: float
    mass0: np.ndarray | float = 0.0

    def field(self, n: int, i: int) -> FourierField:
        return FourierField(self.grid, self.coeffs[n][i])

    def norms2(self) -> np.ndarray:
        """||u^n(t)||^2, shape (N+1, len(times)) + batch."""
        axes = tuple(range(-self.grid.d, 0))
        return np.array([[np.sum(np.abs(c) ** 2, axis=axes) for c in cn] for cn in self.coeffs])


def compute_iterates_array(c0: np.ndarray, grid: TorusGrid, lam: float, N: int, times: Sequence[float],
                           quadrature_dt: float, rule: str = "trapezoid") -> IterateSet:
    """Interaction-picture quadrature of the iterate hierarchy, all orders marched together.

    u^n_hat(k,t) = -i lam^2 exp(-i t|k|^2) int_0^t exp(i s|k|^2) S^n_hat(k,s) ds with
    S^n = sum_{i+j+k=n-1} P(u^i, conj u^j, u^k). The source at a node only needs
    lower orders at the same node, so one pass over the nodes suffices.

    rule="trapezoid" is the composite trapezoid rule.  rule="simpson" combines the
    step-h and step-2h trapezoid sums at even nodes (Richardson), which is
    Simpson's rule for u^1; output times must then be multiples of 2h.
    """
    if N < 0:
        raise DomainError("N must be nonnegative")
    if rule not in ("trapezoid", "simpson"):
        raise DomainError(f"unknown quadrature rule {rule!r}")
    h = float(quadrature_dt)
    times = np.asarray(times, dtype=float)
    out_steps = steps_for(times, h)
    if rule == "simpson" and np.any(out_steps % 2):
        raise DomainError("simpson rule needs output times on even quadrature nodes")
    J = int(out_steps.max()) if len(out_steps) else 0
    c0 = np.asarray(c0, dtype=complex)
    ksq = grid.ksq()
    sb = _SourceBuilder(grid)
    lam2 = lam**2
    shape = c0.shape

    result = [[None] * len(times) for _ in range(N + 1)]
    I = [np.zeros(shape, complex) for _ in range(N + 1)]       # trapezoid accumulators
    I2 = [np.zeros(shape, complex) for _ in range(N + 1)]      # step-2h accumulators
    g_prev = [None] * (N + 1)
    g_prev2 = [None] * (N + 1)
    out_pos = {int(s): [i for i, v in enumerate(out_steps) if v == s] for s in out_steps}

    for j in range(J + 1):
        s = j * h
        ph = np.exp(-1j * s * ksq)
        coeffs = [c0 * ph]
        phys = [sb.phys(coeffs[0])] if N >= 1 else []
        for n in range(1, N + 1):
            g = np.conj(ph) * sb.source(n, coeffs, phys)
            if j == 0:
                I[n] = np.zeros(shape, complex)
            else:
                I[n] = I[n] + 0.5 * h * (g_prev[n] + g)
            val = I[n]
            if rule == "simpson" and j % 2 == 0:
                if j > 0:
                    I2[n] = I2[n] + h * (g_prev2[n] + g)
                val = (4.0 * I[n] - I2[n]) / 3.0
            g_prev2[n] = g_prev[n]
            g_prev[n] = g
            cn = -1j * lam2 * ph * val
            coeffs.append(cn)
            if n < N:
                phys.append(sb.phys(cn))
        for i in out_pos.get(j, []):
            for n in range(N + 1):
                result[n][i] = coeffs[n]
    axes = tuple(range(-grid.d, 0))
    mass0 = np.sum(np.abs(c0) ** 2, axis=axes)
    return IterateSet(N, times, result, grid, lam, mass0)


def compute_iterates(u0: FourierField, N: int, times: Sequence[float], quadrature_dt: float, lam: float,
                     rule: str = "trapezoid") -> IterateSet:
    return compute_iterates_array(u0.coeffs, u0.grid, lam, N, times, quadrature_dt, rule)


def error_term(iterates: IterateSet, time_index: int) -> FourierField:
    """E^N = lam^2 [ -sum u^i conj(u^j) u^k + 2 (2pi)^-d sum V^{ij} u^k ], i,j,k <= N, i+j+k >= N."""
    g, N, d = iterates.grid, iterates.N, iterates.grid.d
    sb = _SourceBuilder(g)
    cs = [iterates.coeffs[n][time_index] for n in range(N + 1)]
    ps = [sb.phys(c) for c in cs]
    prod = 0.0
    corr = 0.0
    for i in range(N + 1):
        for j in range(N + 1):
            for k in range(N + 1):
                if i + j + k < N:
                    continue
                prod = prod + ps[i] * np.conj(ps[j]) * ps[k]
                corr = corr + _bcast(inner(cs[i], cs[j], d), d) * cs[k]
    prod_hat = sfft.fftn(prod, axes=tuple(range(-d, 0))) * sb.to_coef
    return FourierField(g, iterates.lam**2 * (-prod_hat + 2.0 * (2 * np.pi) ** (-d) * corr))


def approximate_solution(iterates: IterateSet, time_index: int) -> FourierField:
    """u_app = chi(t/2) exp(i lam^2 omega(t)) sum_n u^n."""
    t = float(iterates.times[time_index])
    g = iterates.grid
    total = sum(iterates.coeffs[n][time_index] for n in range(iterates.N + 1))
    om = wick_phase_from_mass(iterates.mass0, t, g.d)
    phase = np.exp(1j * iterates.lam**2 * np.asarray(om))
    return FourierField(g, float(smooth_cutoff(t / 2)) * _bcast(phase, g.d) * total)


@dataclass
class IterateMoments:
    """Monte Carlo E||u^n(t)||^2, arrays of shape (N+1, len(times))."""

    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray | None
    ensemble_size: int


def iterate_moments(params: PhysicalParams, grid: TorusGrid, profile: DataProfile, N: int,
                    times: Sequence[float], ensemble_size: int, seed: int = 0,
                    quadrature_dt: float | None = None, rule: str = "trapezoid",
                    batch_size: int = 16) -> IterateMoments:
    h = params.t_lin / 20 if quadrature_dt is None else quadrature_dt
    sampler = InitialDataSampler(params, grid, profile)
    seeds = realization_seeds(seed, ensemble_size)
    stats = RunningStats()
    for i in range(0, ensemble_size, batch_size):
        c0 = sampler.batch(seeds[i:i + batch_size])
        its = compute_iterates_array(c0, grid, params.lam, N, times, h, rule)
        x = np.moveaxis(its.norms2(), -1, 0)  # (batch, N+1, times)
        stats.add_batch(x)
    return IterateMoments(np.asarray(times, float), stats.mean, stats.stderr(), ensemble_size)


def iterate_moment_L2(params: PhysicalParams, grid: TorusGrid, profile: DataProfile, n: int, t: float,
                      ensemble_size: int, seed: int = 0, quadrature_dt: float | None = None,
                      rule: str = "trapezoid"):
    """(mean, stderr) of ||u^n(t)||^2 over the ensemble."""
    m = iterate_moments(params, grid, profile, n, [t], ensemble_size, seed, quadrature_dt, rule)
    se = None if m.stderr is None else float(m.stderr[n, 0])
    return float(m.mean[n, 0]), se
