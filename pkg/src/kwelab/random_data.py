"""Gaussian random initial data and an exact Wick-pairing oracle."""
from __future__ import annotations

import csv
from functools import partial
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .params_grid import FourierField, PhysicalParams, TorusGrid


@dataclass(frozen=True)
class DataProfile:
    """Real profile A on R^d, vanishing for |x| > support_radius.

    ``func`` maps an array of points of shape (d, ...) to values of shape (...).
    """

    func: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    name: str = "custom"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.sqrt((x * x).sum(axis=0))
        out = np.asarray(self.func(x), dtype=float)
        return np.where(r > self.support_radius, 0.0, out)


def _bump(x, radius, height):
    r2 = (x * x).sum(axis=0) / radius**2
    out = np.zeros(r2.shape)
    inside = r2 < 1.0
    out[inside] = height * np.exp(1.0 / (r2[inside] - 1.0))
    return out


def bump_profile(radius: float = 1.0, height: float = 1.0) -> DataProfile:
    """Radial bump height * exp(1/(|x/radius|^2 - 1)) on |x| < radius."""
    return DataProfile(partial(_bump, radius=radius, height=height), radius, f"bump(r={radius},h={height})")


def _zero(x):
    return np.zeros(np.shape(x)[1:])


def zero_profile(radius: float = 1.0) -> DataProfile:
    return DataProfile(_zero, radius, "zero")


def support_points(eps: float, radius: float, d: int) -> np.ndarray:
    """Integer k with |eps k| < radius, lexicographically ordered, shape (n, d).

    This ordering fixes which Gaussian variable belongs to which frequency, so a
    seed produces the same field on every grid large enough to hold it.
    """
    K = int(np.floor(radius / eps))
    axis = np.arange(-K, K + 1)
    pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = (pts * pts).sum(axis=1) * eps**2 < radius**2
    return pts[keep]


def profile_on_lattice(profile: DataProfile, eps: float, ks: np.ndarray) -> np.ndarray:
    """A(eps k) for an (n, d) array of integer frequencies."""
    return profile(eps * np.asarray(ks, dtype=float).T)


def profile_on_grid(profile: DataProfile, grid: TorusGrid) -> np.ndarray:
    """A(eps k) on the grid in FFT order."""
    return profile(grid.eps * grid.wavevectors().astype(float))


def complex_gaussians(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussians G = (X + iY)/sqrt(2), E|G|^2 = 1."""
    z = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def realization_seeds(master_seed: int, count: int) -> list:
    """Per-realization seeds, child i of SeedSequence(master_seed).spawn(count)."""
    return np.random.SeedSequence(int(master_seed)).spawn(int(count))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


class InitialDataSampler:
    """Precomputes the support bookkeeping so repeated draws are cheap."""

    def __init__(self, params: PhysicalParams, grid: TorusGrid, profile: DataProfile):
        if not grid.fits(profile.support_radius):
            raise DomainError(
                f"profile support radius {profile.support_radius}/eps does not fit in grid with M={grid.M}"
            )
        self.params, self.grid, self.profile = params, grid, profile
        self.ks = support_points(params.eps, profile.support_radius, grid.d)
        amp = profile_on_lattice(profile, params.eps, self.ks)
        self.scale = (2 * np.pi) ** (grid.d / 2) * params.eps ** (grid.d / 2) * amp
        self.flat_index = np.ravel_multi_index(tuple((self.ks % grid.M).T), grid.shape)

    def coeffs(self, seed) -> np.ndarray:
        g = complex_gaussians(_rng(seed), len(self.ks))
        out = np.zeros(self.grid.M**self.grid.d, dtype=complex)
        out[self.flat_index] = self.scale * g
        return out.reshape(self.grid.shape)

    def batch(self, seeds: Sequence) -> np.ndarray:
        return np.stack([self.coeffs(s) for s in seeds])

    def __call__(self, seed) -> FourierField:
        return FourierField(self.grid, self.coeffs(seed))


def sample_initial_data(params: PhysicalParams, grid: TorusGrid, profile: DataProfile, seed) -> FourierField:
    """u0_hat(k) = (2 pi)^(d/2) eps^(d/2) A(eps k) G(k)."""
    return InitialDataSampler(params, grid, profile)(seed)


def expected_mass(params: PhysicalParams, profile: DataProfile) -> float:
    """E ||u0||^2 = (2 pi)^d eps^d sum_k A(eps k)^2."""
    ks = support_points(params.eps, profile.support_radius, params.d)
    a = profile_on_lattice(profile, params.eps, ks)
    return float((2 * np.pi) ** params.d * params.eps**params.d * np.sum(a * a))


def wick_expectation(ks: Sequence, conjugated: Sequence[bool]) -> int:
    """E[prod G(k_i)^(conj_i)] for independent standard complex Gaussians.

    Counts the perfect matchings pairing an unconjugated slot with a conjugated
    slot of equal frequency, by exhaustive recursion.
    """
    if len(ks) != len(conjugated):
        raise DomainError("ks and conjugated must have equal length")
    plain = [tuple(np.atleast_1d(k).tolist()) for k, c in zip(ks, conjugated) if not c]
    conj = [tuple(np.atleast_1d(k).tolist()) for k, c in zip(ks, conjugated) if c]
    if len(plain) != len(conj):
        return 0

    def count(i: int, used: tuple) -> int:
        if i == len(plain):
            return 1
        total = 0
        for j, kc in enumerate(conj):
            if not used[j] and kc == plain[i]:
                total += count(i + 1, used[:j] + (True,) + used[j + 1:])
        return total

    return count(0, (False,) * len(conj))


def field_to_csv(field_: FourierField, path, nonzero_only: bool = True) -> None:
    """Write rows (k_1, ..., k_d, re, im)."""
    k = field_.grid.wavevectors().reshape(field_.grid.d, -1).T
    c = field_.coeffs.reshape(-1)
    order = np.lexsort(k.T[::-1])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"k{i + 1}" for i in range(field_.grid.d)] + ["re", "im"])
        for i in order:
            if nonzero_only and c[i] == 0:
                continue
            w.writerow(list(k[i]) + [repr(float(c[i].real)), repr(float(c[i].imag))])
