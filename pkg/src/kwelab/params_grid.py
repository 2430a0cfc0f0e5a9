"""Physical parameters, the periodic grid and the Fourier convention.

Fourier coefficients use the unitary normalisation

    f_hat(k) = (2 pi)^(-d/2) * integral over [0, 2pi)^d of f(x) exp(-i k.x) dx,

so that ||f||^2 = sum_k |f_hat(k)|^2 and a plane wave exp(i k0.x) has a
single coefficient of modulus (2 pi)^(d/2).  Arrays of coefficients are kept
in numpy FFT order (index 0 is k = 0, negative frequencies at the end).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import DomainError


@dataclass(frozen=True)
class PhysicalParams:
    """High-frequency parameter eps, coupling lam and the derived time scales."""

    d: int
    eps: float
    lam: float
    gamma: float = float("nan")
    t_kin: float = field(init=False)
    t_lin: float = field(init=False)
    t_nonlin: float = field(init=False)

    def __post_init__(self):
        lam4 = self.lam**4
        object.__setattr__(self, "t_kin", 1.0 / (self.eps**2 * lam4) if lam4 > 0 else math.inf)
        object.__setattr__(self, "t_lin", self.eps**2)
        object.__setattr__(self, "t_nonlin", 1.0 / self.lam**2 if self.lam > 0 else math.inf)

    def with_lambda(self, lam: float) -> "PhysicalParams":
        return PhysicalParams(self.d, self.eps, float(lam), float("nan"))


def make_params(eps: float, gamma: float, d: int = 2) -> PhysicalParams:
    """Build parameters in the scaling regime lam = eps^(-gamma)."""
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must satisfy 0 < eps <= 1, got {eps}")
    if not 0.0 < gamma < 0.5:
        raise DomainError(f"gamma must satisfy 0 < gamma < 1/2, got {gamma}")
    _check_dim(d)
    return PhysicalParams(int(d), float(eps), float(eps) ** (-float(gamma)), float(gamma))


def params_from_lambda(eps: float, lam: float, d: int = 2) -> PhysicalParams:
    """Direct (eps, lambda) construction. lam = 0 switches the nonlinearity off."""
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must satisfy 0 < eps <= 1, got {eps}")
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    _check_dim(d)
    gamma = -math.log(lam) / math.log(eps) if (0 < eps < 1 and lam > 0) else float("nan")
    return PhysicalParams(int(d), float(eps), float(lam), gamma)


def _check_dim(d):
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d}")


def _smooth_size(n: int) -> bool:
    for p in (3, 5, 7, 11):
        while n % p == 0:
            n //= p
    return n == 1


def odd_fft_size(min_modes: int) -> int:
    """Smallest odd M >= min_modes whose prime factors are all in {3, 5, 7, 11}."""
    m = max(int(min_modes), 1)
    if m % 2 == 0:
        m += 1
    while not _smooth_size(m):
        m += 2
    return m


@dataclass(frozen=True)
class TorusGrid:
    """M^d equispaced samples of [0, 2pi)^d with M odd."""

    d: int
    modes_per_dim: int
    eps: float = 1.0

    def __post_init__(self):
        if self.modes_per_dim % 2 != 1 or self.modes_per_dim < 1:
            raise DomainError(f"modes_per_dim must be a positive odd integer, got {self.modes_per_dim}")
        _check_dim(self.d)

    @property
    def M(self) -> int:
        return self.modes_per_dim

    @property
    def shape(self) -> tuple:
        return (self.modes_per_dim,) * self.d

    @property
    def kmax(self) -> int:
        return (self.modes_per_dim - 1) // 2

    def freqs_1d(self) -> np.ndarray:
        """Integer frequencies of one axis in FFT order."""
        return np.fft.fftfreq(self.M, 1.0 / self.M).round().astype(np.int64)

    def wavevectors(self) -> np.ndarray:
        """Integer lattice vectors, shape (d, M, ..., M), FFT order."""
        f = self.freqs_1d()
        return np.stack(np.meshgrid(*([f] * self.d), indexing="ij"))

    def ksq(self) -> np.ndarray:
        k = self.wavevectors()
        return (k * k).sum(axis=0)

    def points(self) -> np.ndarray:
        x = 2 * np.pi * np.arange(self.M) / self.M
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    def fits(self, support_radius: float) -> bool:
        """True when the frequency ball |k| < support_radius/eps lies inside the grid."""
        return self.M * self.eps / 2.0 > support_radius

    def index_of(self, k) -> tuple:
        return tuple(int(c) % self.M for c in k)


def grid_for(eps: float, support_radius: float = 1.0, d: int = 2, pad: float = 2.0,
             extra_factor: int = 1) -> TorusGrid:
    """Grid holding the data support (radius R/eps) with a padding factor.

    ``extra_factor`` widens the band further, e.g. 3 for exact cubic products.
    """
    K = support_radius / eps
    M = odd_fft_size(int(math.ceil(pad * 2 * K * extra_factor)) + 1)
    return TorusGrid(d, M, eps)


@dataclass
class FourierField:
    """Unitary Fourier coefficients on a grid (FFT order)."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if tuple(self.coeffs.shape[-self.grid.d:]) != self.grid.shape:
            raise DomainError(f"coefficient array shape {self.coeffs.shape} does not match grid {self.grid.shape}")

    def norm2(self) -> float:
        """||f||^2 in L^2 of the torus."""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def series_coeffs(self) -> np.ndarray:
        """Fourier series coefficients c_k with f = sum_k c_k exp(i k.x)."""
        return self.coeffs / (2 * np.pi) ** (self.grid.d / 2)

    def to_samples(self) -> np.ndarray:
        return inverse_transform(self)

    def __getitem__(self, k):
        return self.coeffs[self.grid.index_of(k)]


def _axes(d):
    return tuple(range(-d, 0))


def forward_transform(samples: np.ndarray, grid: TorusGrid | None = None) -> FourierField:
    """Physical samples on the grid -> unitary Fourier coefficients."""
    samples = np.asarray(samples)
    if grid is None:
        M = samples.shape[-1]
        d = samples.ndim
        if M % 2 == 0 or any(s != M for s in samples.shape):
            raise DomainError(f"samples must form an odd M^d cube, got shape {samples.shape}")
        grid = TorusGrid(d, M)
    if tuple(samples.shape[-grid.d:]) != grid.shape:
        raise DomainError(f"sample array shape {samples.shape} does not match grid {grid.shape}")
    return FourierField(grid, fft_unitary(samples, grid.d))


def inverse_transform(field_: FourierField) -> np.ndarray:
    return ifft_unitary(field_.coeffs, field_.grid.d)


def fft_unitary(samples: np.ndarray, d: int) -> np.ndarray:
    """Array-level forward transform over the last d axes."""
    M = samples.shape[-1]
    return sfft.fftn(samples, axes=_axes(d)) * ((2 * np.pi) ** (d / 2) / M**d)


def ifft_unitary(coeffs: np.ndarray, d: int) -> np.ndarray:
    M = coeffs.shape[-1]
    return sfft.ifftn(coeffs, axes=_axes(d)) * (M**d / (2 * np.pi) ** (d / 2))


def l2_norm2_physical(samples: np.ndarray, d: int) -> float:
    """Riemann sum of |f|^2 over the torus (exact for trigonometric polynomials in band)."""
    M = samples.shape[-1]
    return float(np.sum(np.abs(samples) ** 2) * (2 * np.pi / M) ** d)
