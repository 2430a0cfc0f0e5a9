"""Brute-force counts of near-resonant lattice points at a single vertex.

degree "one":  Q(k)     = |k|^2 + s |k0 - k|^2                      (s = +1 or -1)
degree "two":  Q(k, k') = |k|^2 + s' |k'|^2 + s |k0 - k - k'|^2     ((s, s') != (1, 1))

with |k|, |k'| < 1/eps, counting the points where |Q - alpha| <= beta.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .errors import DomainError, ResourceError

MAX_PAIRS = 4 * 10**9


def ball_points(eps: float, d: int) -> np.ndarray:
    """Integer points with |k| < 1/eps (strict)."""
    r = 1.0 / eps
    m = int(math.ceil(r))
    axes = np.meshgrid(*([np.arange(-m, m + 1)] * d), indexing="ij")
    pts = np.stack([a.ravel() for a in axes], axis=1)
    return np.ascontiguousarray(pts[(pts * pts).sum(axis=1) < r * r], dtype=np.int64)


@numba.njit(cache=True)
def _count_one(pts, k0, s, alpha, beta):
    c = 0
    for i in range(pts.shape[0]):
        a = 0
        b = 0
        for x in range(pts.shape[1]):
            a += pts[i, x] * pts[i, x]
            y = k0[x] - pts[i, x]
            b += y * y
        if abs(a + s * b - alpha) <= beta:
            c += 1
    return c


@numba.njit(cache=True)
def _count_two(pts, k0, s, sp, alpha, beta):
    P = pts.shape[0]
    d = pts.shape[1]
    sq = np.zeros(P, dtype=np.int64)
    for i in range(P):
        for x in range(d):
            sq[i] += pts[i, x] * pts[i, x]
    c = 0
    for i in range(P):
        for j in range(P):
            b = 0
            for x in range(d):
                y = k0[x] - pts[i, x] - pts[j, x]
                b += y * y
            if abs(sq[i] + sp * sq[j] + s * b - alpha) <= beta:
                c += 1
    return c


def lattice_resonance_count(d: int, eps: float, k0, alpha: float, beta: float, degree: str = "one",
                            sigma: int = -1, sigma_prime: int = -1, max_pairs: int = MAX_PAIRS) -> int:
    """Number of lattice points (degree one) or pairs (degree two) with |Q - alpha| <= beta."""
    k0 = np.asarray(k0, dtype=np.int64).reshape(-1)
    if k0.shape[0] != d:
        raise DomainError(f"k0 has {k0.shape[0]} components, expected {d}")
    if float(k0 @ k0) > 1.0 / eps**2:
        raise DomainError("|k0| must not exceed 1/eps")
    if beta < 1:
        raise DomainError("beta must be at least 1")
    if sigma not in (1, -1) or sigma_prime not in (1, -1):
        raise DomainError("signs must be +1 or -1")
    pts = ball_points(eps, d)
    if degree == "one":
        return int(_count_one(pts, k0, sigma, float(alpha), float(beta)))
    if degree != "two":
        raise DomainError(f"degree must be 'one' or 'two', got {degree!r}")
    if sigma == 1 and sigma_prime == 1:
        raise DomainError("(sigma, sigma') = (1, 1) is excluded for degree two")
    if float(len(pts)) ** 2 > max_pairs:
        raise ResourceError(f"{len(pts)}^2 pairs exceed the cap {max_pairs}")
    return int(_count_two(pts, k0, sigma, sigma_prime, float(alpha), float(beta)))


def fit_exponent(eps_values, counts, beta: float = 1.0) -> float:
    """Least-squares slope of log(count / beta) against log(eps)."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(counts, dtype=float) / beta)
    return float(np.polyfit(x, y, 1)[0])


def counting_exponents(eps_values=(1 / 8, 1 / 16, 1 / 32, 1 / 64), k0=(1, 0), alpha: float = 0.0,
                       beta: float = 1.0, d: int = 2) -> dict:
    """Fitted eps-exponents of the degree-one (s=-1) and degree-two (s=1, s'=-1) counts."""
    one = [lattice_resonance_count(d, e, k0, alpha, beta, "one", sigma=-1) for e in eps_values]
    two = [lattice_resonance_count(d, e, k0, alpha, beta, "two", sigma=1, sigma_prime=-1) for e in eps_values]
    return {"eps": list(eps_values), "one": one, "two": two,
            "exponent_one": fit_exponent(eps_values, one, beta),
            "exponent_two": fit_exponent(eps_values, two, beta)}
