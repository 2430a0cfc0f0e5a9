"""Oscillatory integrals over the time simplex {s_0 + ... + s_m = t, s_j >= 0}.

    I(e; t) = integral over the simplex of prod_j exp(-i s_j e_j) ds

Closed form: I = i^m f[e_0, ..., e_m] with f(x) = exp(-i t x) (divided differences).
Contour form: I = exp(eta t)/(2 pi) * integral over R of exp(-i a t) prod_j i/(a - e_j + i eta) da.
"""
from __future__ import annotations

import math
import warnings

import numba
import numpy as np
from numba import types
from scipy import LowLevelCallable, integrate, linalg

from .errors import NumericError

CONFLUENT_TOL = 1e-6


def _derivative_term(x, t, order):
    """f^(order)(x)/order! for f(x) = exp(-i t x)."""
    return (-1j * t) ** order / math.factorial(order) * np.exp(-1j * t * x)


def divided_difference_exp(nodes, t: float) -> np.ndarray:
    """f[x_0..x_m] for f(x) = exp(-i t x), vectorised over leading axes.

    Nodes are sorted; a block of nodes spanning less than CONFLUENT_TOL is
    treated as confluent and uses the Taylor coefficient f^(k)/k! at its first node.
    """
    x = np.sort(np.asarray(nodes, dtype=float), axis=-1)
    m = x.shape[-1] - 1
    table = [np.exp(-1j * t * x[..., i]) for i in range(m + 1)]
    for level in range(1, m + 1):
        nxt = []
        for i in range(m + 1 - level):
            lo, hi = x[..., i], x[..., i + level]
            gap = hi - lo
            conf = gap < CONFLUENT_TOL
            safe = np.where(conf, 1.0, gap)
            quotient = (table[i + 1] - table[i]) / safe
            nxt.append(np.where(conf, _derivative_term(lo, t, level), quotient))
        table = nxt
    return table[0]


def simplex_integral(e, t: float) -> np.ndarray:
    """Closed form of the simplex integral; ``e`` has shape (..., m+1)."""
    e = np.asarray(e, dtype=float)
    m = e.shape[-1] - 1
    return (1j) ** m * divided_difference_exp(e, t)


def simplex_integral_expm(e, t: float) -> complex:
    """Independent evaluation through the exponential of a bidiagonal matrix."""
    e = np.asarray(e, dtype=float)
    m = len(e) - 1
    Z = np.diag(-1j * e) + np.diag(np.ones(m), 1)
    return complex(linalg.expm(t * Z)[0, m])


def tree_phases(omegas) -> np.ndarray:
    """e_j = sum_{k>j} Omega_k for j = 0..n (so e_n = 0); omegas has shape (..., n)."""
    om = np.asarray(omegas, dtype=float)
    rev = np.cumsum(om[..., ::-1], axis=-1)[..., ::-1]
    zero = np.zeros(om.shape[:-1] + (1,))
    return np.concatenate([rev, zero], axis=-1)


def tree_time_factor(omegas, t: float) -> np.ndarray:
    """integral over the simplex of prod_k exp(-i Omega_k (s_0 + ... + s_{k-1}))."""
    return simplex_integral(tree_phases(omegas), t)


def _resolvent(a, e, eta):
    out = np.ones_like(np.asarray(a, dtype=complex))
    for ek in e:
        out = out * (1j / (a - ek + 1j * eta))
    return out


def _make_cfunc(part: int, flip: bool):
    """QUADPACK integrand: real or imaginary part of prod_j i/(a - e_j + i eta).

    Argument layout xx = (a, eta, m, e_1, ..., e_m); ``flip`` evaluates at -a.
    """
    sgn = -1.0 if flip else 1.0

    @numba.cfunc(types.float64(types.intc, types.CPointer(types.float64)))
    def f(nargs, xx):
        a = sgn * xx[0]
        eta = xx[1]
        m = int(xx[2])
        re, im = 1.0, 0.0
        for k in range(m):
            # i/(x + i eta) = (eta + i x)/(x^2 + eta^2)
            x = a - xx[3 + k]
            den = x * x + eta * eta
            fr, fi = eta / den, x / den
            re, im = re * fr - im * fi, re * fi + im * fr
        return re if part == 0 else im

    return LowLevelCallable(f.ctypes)


_GR, _GI = _make_cfunc(0, False), _make_cfunc(1, False)
_HR, _HI = _make_cfunc(0, True), _make_cfunc(1, True)


def resolvent_integral(e, t: float, eta: float | None = None, alpha_max: float | None = None,
                       epsrel: float = 1e-11, limit: int = 4000, info: bool = False):
    """Contour form of the simplex integral by adaptive quadrature.

    The line is split at +-alpha_max (default 10 max|e| + 10/eta).  The central
    piece uses QUADPACK's oscillatory rule for the exp(-i a t) weight; the two
    tails use the Fourier-integral rule, so the slowly decaying case of a single
    factor still converges.
    """
    e = np.asarray(e, dtype=float)
    eta = 1.0 / t if eta is None else float(eta)
    if eta <= 0:
        raise NumericError("eta must be positive")
    A = 10 * float(np.max(np.abs(e))) + 10.0 / eta if alpha_max is None else float(alpha_max)
    err_total = 0.0
    args = (eta, float(len(e))) + tuple(float(v) for v in e)

    def piece(func, a, b, wt, wvar):
        nonlocal err_total
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            if b == np.inf:
                val, err = integrate.quad(func, a, b, args=args, weight=wt, wvar=wvar, limlst=200,
                                          limit=limit, epsabs=1e-15)
            else:
                val, err = integrate.quad(func, a, b, args=args, weight=wt, wvar=wvar, limit=limit,
                                          epsabs=1e-15, epsrel=epsrel)
        err_total += abs(err)
        return val

    gr, gi = _GR, _GI

    # central: int g(a) (cos(at) - i sin(at)) da
    c_re = piece(gr, -A, A, "cos", t) + piece(gi, -A, A, "sin", t)
    c_im = piece(gi, -A, A, "cos", t) - piece(gr, -A, A, "sin", t)

    # right tail a in [A, inf)
    r_re = piece(gr, A, np.inf, "cos", t) + piece(gi, A, np.inf, "sin", t)
    r_im = piece(gi, A, np.inf, "cos", t) - piece(gr, A, np.inf, "sin", t)

    # left tail: a = -b, exp(-i a t) = cos(bt) + i sin(bt)
    hr, hi = _HR, _HI
    l_re = piece(hr, A, np.inf, "cos", t) - piece(hi, A, np.inf, "sin", t)
    l_im = piece(hi, A, np.inf, "cos", t) + piece(hr, A, np.inf, "sin", t)

    total = complex(c_re + r_re + l_re, c_im + r_im + l_im)
    scale = math.exp(eta * t) / (2 * math.pi)
    val = scale * total
    if not np.isfinite(val):
        raise NumericError(f"resolvent quadrature produced a non-finite value for e={e.tolist()}, t={t}")
    if info:
        return val, scale * err_total
    return val


def tree_resolvent_factor(omegas, t: float, eta: float | None = None) -> complex:
    return resolvent_integral(tree_phases(np.atleast_1d(omegas))[...], t, eta)
