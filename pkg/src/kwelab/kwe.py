"""Kinetic wave equation: collision operator, time stepping, the discrete main term
and the comparison against ensemble simulations.

Conventions.  The kinetic density is rho = (2 pi)^d A^2, so that the initial
spectrum of the field is E|u_hat(k, 0)|^2 = eps^d rho(eps k).  The collision
operator is

    C[rho](k) = c0 int delta(k + l - m - n) delta(|k|^2 + |l|^2 - |m|^2 - |n|^2)
                rho_k rho_l rho_m rho_n (1/rho_k + 1/rho_l - 1/rho_m - 1/rho_n)

with c0 = 4 pi / (2 pi)^(2d).  After eliminating n = k + l - m the resonance
reads -2 (k - m).(l - m) = 0, so l runs over the hyperplane through m
orthogonal to a = k - m with co-area weight 1 / (2 |a|).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate

from .errors import DomainError, NumericError, ResourceError
from .params_grid import PhysicalParams
from .random_data import DataProfile, support_points


def collision_constant(d: int) -> float:
    return 4.0 * math.pi / (2.0 * math.pi) ** (2 * d)


# ---------------------------------------------------------------- densities
#
# Every density is evaluated inside the kernels through an njit function
# f(x, p) -> float, where p is a float parameter vector.

@numba.njit(cache=True)
def _eval_table(x, p):
    """Multilinear interpolation on a centred grid; p = [d, n, h, values...]."""
    d = int(p[0])
    n = int(p[1])
    h = p[2]
    J = (n - 1) // 2
    flat = 0
    stride = 1
    base = np.empty(d, dtype=np.int64)
    frac = np.empty(d)
    for i in range(d):
        y = x[i] / h + J
        b = int(math.floor(y))
        if b < 0 or b >= n - 1:
            if b == n - 1 and y == b:
                b = n - 2
            else:
                return 0.0
        base[i] = b
        frac[i] = y - b
    val = 0.0
    for corner in range(1 << d):
        w = 1.0
        flat = 0
        stride = 1
        for i in range(d - 1, -1, -1):
            bit = (corner >> i) & 1
            w *= frac[i] if bit else 1.0 - frac[i]
            flat += (base[i] + bit) * stride
            stride *= n
        if w != 0.0:
            val += w * p[3 + flat]
    return val


@numba.njit(cache=True)
def _eval_const(x, p):
    return p[0]


@numba.njit(cache=True)
def _eval_rj(x, p):
    """p[0] / (|x|^2 + p[1])."""
    r2 = 0.0
    for i in range(x.shape[0]):
        r2 += x[i] * x[i]
    return p[0] / (r2 + p[1])


@numba.njit(cache=True)
def _eval_bump2(x, p):
    """p[2] * (p[1] exp(1/(|x/p[0]|^2 - 1)))^2 inside the ball of radius p[0]."""
    r2 = 0.0
    for i in range(x.shape[0]):
        r2 += x[i] * x[i]
    r2 /= p[0] * p[0]
    if r2 >= 1.0:
        return 0.0
    a = p[1] * math.exp(1.0 / (r2 - 1.0))
    return p[2] * a * a


@dataclass
class AnalyticDensity:
    """Closed-form density usable by the quadrature kernels."""

    fn: object
    params: np.ndarray
    support_radius: float
    name: str

    def evaluator(self):
        return self.fn, self.params

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.array([self.fn(np.ascontiguousarray(xi), self.params) for xi in x])


def constant_density(c: float = 1.0) -> AnalyticDensity:
    return AnalyticDensity(_eval_const, np.array([float(c)]), math.inf, f"const({c})")


def rayleigh_jeans_density(c: float = 1.0, mu: float = 0.0) -> AnalyticDensity:
    """c / (|k|^2 + mu): the bracket equals the resonance modulus times a product."""
    return AnalyticDensity(_eval_rj, np.array([float(c), float(mu)]), math.inf, f"rj({c},{mu})")


def bump_density(radius: float = 1.0, height: float = 1.0, d: int = 2) -> AnalyticDensity:
    """(2 pi)^d A^2 for the default bump profile A."""
    return AnalyticDensity(_eval_bump2, np.array([float(radius), float(height), (2 * math.pi) ** d]),
                           float(radius), f"bump2(r={radius},h={height})")


@dataclass
class SpectralDensity:
    """Nonnegative density on the centred grid h * {-J..J}^d."""

    values: np.ndarray
    h: float
    excluded: float = 0.0

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def J(self) -> int:
        return (self.n - 1) // 2

    def axis(self) -> np.ndarray:
        return self.h * np.arange(-self.J, self.J + 1)

    def points(self) -> np.ndarray:
        """Node coordinates, shape values.shape + (d,)."""
        ax = self.axis()
        return np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), axis=-1)

    def mass(self) -> float:
        return float(self.values.sum() * self.h**self.d)

    def energy(self) -> float:
        r2 = (self.points() ** 2).sum(axis=-1)
        return float((r2 * self.values).sum() * self.h**self.d)

    @property
    def support_radius(self) -> float:
        nz = self.values != 0
        if not nz.any():
            return 0.0
        r = np.sqrt((self.points()[nz] ** 2).sum(axis=-1)).max()
        return float(r + self.h * math.sqrt(self.d))

    def evaluator(self):
        p = np.concatenate([[self.d, self.n, self.h], self.values.ravel()]).astype(float)
        return _eval_table, p

    def __call__(self, x) -> np.ndarray:
        fn, p = self.evaluator()
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.array([fn(np.ascontiguousarray(xi), p) for xi in x])

    def with_values(self, values) -> "SpectralDensity":
        return SpectralDensity(np.asarray(values, dtype=float), self.h)


def density_grid(radius: float, h: float, d: int = 2) -> SpectralDensity:
    J = int(math.ceil(radius / h))
    return SpectralDensity(np.zeros((2 * J + 1,) * d), float(h))


def tabulate(func, radius: float, h: float, d: int = 2) -> SpectralDensity:
    """Sample ``func`` (points of shape (..., d) -> values) on a grid covering the ball."""
    rho = density_grid(radius, h, d)
    vals = np.asarray(func(rho.points()), dtype=float)
    return SpectralDensity(vals, float(h))


def density_from_profile(profile: DataProfile, h: float, d: int = 2, margin: float = 3.0) -> SpectralDensity:
    """(2 pi)^d A^2 on a grid reaching ``margin`` times the support radius."""
    return tabulate(lambda x: (2 * np.pi) ** d * profile(np.moveaxis(x, -1, 0)) ** 2,
                    margin * profile.support_radius, h, d)


# ---------------------------------------------------------------- quadrature

@numba.njit(cache=True)
def bracket(rk, rl, rm, rn):
    """Multiplied-out rho_k rho_l rho_m rho_n (1/rho_k + 1/rho_l - 1/rho_m - 1/rho_n)."""
    return rl * rm * rn + rk * rm * rn - rk * rl * rn - rk * rl * rm


@numba.njit(cache=True)
def _perp_basis(a, E):
    """Orthonormal basis of the hyperplane orthogonal to a, written into E (d-1, d)."""
    d = a.shape[0]
    na = 0.0
    for i in range(d):
        na += a[i] * a[i]
    na = math.sqrt(na)
    imax = 0
    for i in range(d):
        if abs(a[i]) > abs(a[imax]):
            imax = i
    cnt = 0
    v = np.empty(d)
    for i in range(d):
        if i == imax:
            continue
        for j in range(d):
            v[j] = -a[i] * a[j] / (na * na)
        v[i] += 1.0
        for q in range(cnt):
            dot = 0.0
            for j in range(d):
                dot += v[j] * E[q, j]
            for j in range(d):
                v[j] -= dot * E[q, j]
        nv = 0.0
        for j in range(d):
            nv += v[j] * v[j]
        nv = math.sqrt(nv)
        for j in range(d):
            E[cnt, j] = v[j] / nv
        cnt += 1
    return na


@numba.njit(cache=True)
def _in_domain(x, rmin2, rmax2):
    r2 = 0.0
    for i in range(x.shape[0]):
        r2 += x[i] * x[i]
    return rmin2 <= r2 <= rmax2


@numba.njit(cache=True)
def _disk_box(center_pt, E, hq, R, lo, hi):
    """Integer box of s with |center_pt + hq sum s_j E_j| <= R possible. False if empty."""
    d = center_pt.shape[0]
    r2 = 0.0
    for i in range(d):
        r2 += center_pt[i] * center_pt[i]
    proj2 = 0.0
    for j in range(d - 1):
        c = 0.0
        for i in range(d):
            c += center_pt[i] * E[j, i]
        proj2 += c * c
    disc = R * R - (r2 - proj2)
    if disc < 0:
        return False
    rad = math.sqrt(disc) / hq
    for j in range(d - 1):
        c = 0.0
        for i in range(d):
            c += center_pt[i] * E[j, i]
        c = -c / hq
        lo[j] = int(math.ceil(c - rad))
        hi[j] = int(math.floor(c + rad))
        if lo[j] > hi[j]:
            return False
    return True


@numba.njit
def _collision_at(fn, p, targets, hq, Jm, Rs, rmin, rmax, cutoff):
    """Pointwise collision integral (without c0) and the excluded |k - m| < cutoff part."""
    T, d = targets.shape
    out = np.zeros(T)
    excl = np.zeros(T)
    rmin2, rmax2 = rmin * rmin, rmax * rmax
    E = np.zeros((max(d - 1, 1), d))
    m = np.empty(d)
    a = np.empty(d)
    l = np.empty(d)
    nn = np.empty(d)
    lo1 = np.empty(d - 1, dtype=np.int64)
    hi1 = np.empty(d - 1, dtype=np.int64)
    lo2 = np.empty(d - 1, dtype=np.int64)
    hi2 = np.empty(d - 1, dtype=np.int64)
    s = np.empty(d - 1, dtype=np.int64)
    jm = np.empty(d, dtype=np.int64)
    wbase = hq ** (2 * d - 1)
    for t in range(T):
        k = targets[t]
        if not _in_domain(k, rmin2, rmax2):
            continue
        rk = fn(k, p)
        J = Jm
        if rk == 0.0:
            J = min(Jm, int(math.ceil(Rs / hq)))
        for i in range(d):
            jm[i] = -J
        done = False
        while not done:
            for i in range(d):
                m[i] = jm[i] * hq
                a[i] = k[i] - m[i]
            # advance the m odometer now so `continue` below is safe
            q = d - 1
            while q >= 0:
                jm[q] += 1
                if jm[q] <= J:
                    break
                jm[q] = -J
                q -= 1
            if q < 0:
                done = True
            if not _in_domain(m, rmin2, rmax2):
                continue
            rm = fn(m, p)
            if rm == 0.0 and rk == 0.0:
                continue
            na2 = 0.0
            for i in range(d):
                na2 += a[i] * a[i]
            if na2 < 1e-28:
                continue
            na = _perp_basis(a, E)
            has1 = _disk_box(m, E, hq, Rs, lo1, hi1)
            has2 = _disk_box(k, E, hq, Rs, lo2, hi2)
            w = wbase / (2.0 * na)
            acc = 0.0
            for box in range(2):
                if box == 0 and not has1:
                    continue
                if box == 1 and not has2:
                    continue
                lo = lo1 if box == 0 else lo2
                hi = hi1 if box == 0 else hi2
                for j in range(d - 1):
                    s[j] = lo[j]
                while True:
                    skip = False
                    if box == 1 and has1:
                        inside = True
                        for j in range(d - 1):
                            if s[j] < lo1[j] or s[j] > hi1[j]:
                                inside = False
                        skip = inside
                    if not skip:
                        for i in range(d):
                            v = m[i]
                            for j in range(d - 1):
                                v += hq * s[j] * E[j, i]
                            l[i] = v
                            nn[i] = v + a[i]
                        if _in_domain(l, rmin2, rmax2) and _in_domain(nn, rmin2, rmax2):
                            acc += bracket(rk, fn(l, p), rm, fn(nn, p))
                    j = d - 2
                    while j >= 0:
                        s[j] += 1
                        if s[j] <= hi[j]:
                            break
                        s[j] = lo[j]
                        j -= 1
                    if j < 0:
                        break
            if na < cutoff:
                excl[t] += abs(acc * w)
            else:
                out[t] += acc * w
    return out, excl


@numba.njit(cache=True)
def _deposit_weights(x, h, n, base, frac):
    """Base indices / fractions of x on the centred grid; False if the stencil leaves the grid."""
    J = (n - 1) // 2
    for i in range(x.shape[0]):
        y = x[i] / h + J
        b = int(math.floor(y))
        f = y - b
        if f < 1e-12:
            f = 0.0
        if b < 0 or b > n - 1 or (b == n - 1 and f > 0.0):
            return False
        if b == n - 1:
            b = n - 2
            f = 1.0
        base[i] = b
        frac[i] = f
    return True


@numba.njit(cache=True)
def _deposit(out, base, frac, n, value):
    d = base.shape[0]
    for corner in range(1 << d):
        w = 1.0
        flat = 0
        stride = 1
        for i in range(d - 1, -1, -1):
            bit = (corner >> i) & 1
            w *= frac[i] if bit else 1.0 - frac[i]
            flat += (base[i] + bit) * stride
            stride *= n
        if w != 0.0:
            out[flat] += w * value


@numba.njit
def _collision_weak(fn, p, d, n, h, Rs):
    """Symmetrised weak-form quadrature on the density grid (without c0).

    Every node (k, m, l) deposits +F/4 at k and l and -F/4 at m and n.  The
    four weights cancel, so mass is conserved exactly; l and n share their
    offset from the grid, so the multilinear deposit conserves energy too.
    """
    J = (n - 1) // 2
    total = n**d
    out = np.zeros(total)
    E = np.zeros((max(d - 1, 1), d))
    k = np.empty(d)
    m = np.empty(d)
    a = np.empty(d)
    l = np.empty(d)
    nn = np.empty(d)
    bl = np.empty(d, dtype=np.int64)
    fl = np.empty(d)
    bn = np.empty(d, dtype=np.int64)
    fn_ = np.empty(d)
    bk = np.empty(d, dtype=np.int64)
    fk = np.zeros(d)
    bm = np.empty(d, dtype=np.int64)
    fm = np.zeros(d)
    lo1 = np.empty(d - 1, dtype=np.int64)
    hi1 = np.empty(d - 1, dtype=np.int64)
    lo2 = np.empty(d - 1, dtype=np.int64)
    hi2 = np.empty(d - 1, dtype=np.int64)
    s = np.empty(d - 1, dtype=np.int64)
    wbase = h ** (3 * d - 1) / 4.0
    Jr = min(J, int(math.ceil(Rs / h)))
    for kf in range(total):
        rem = kf
        for i in range(d - 1, -1, -1):
            k[i] = (rem % n - J) * h
            rem //= n
        rk = fn(k, p)
        for mf in range(total):
            rem = mf
            for i in range(d - 1, -1, -1):
                m[i] = (rem % n - J) * h
                rem //= n
            if rk == 0.0:
                far = False
                for i in range(d):
                    if abs(m[i]) > Jr * h:
                        far = True
                if far:
                    continue
            rm = fn(m, p)
            if rm == 0.0 and rk == 0.0:
                continue
            na2 = 0.0
            for i in range(d):
                a[i] = k[i] - m[i]
                na2 += a[i] * a[i]
            if na2 < 1e-28:
                continue
            na = _perp_basis(a, E)
            has1 = _disk_box(m, E, h, Rs, lo1, hi1)
            has2 = _disk_box(k, E, h, Rs, lo2, hi2)
            w = wbase / (2.0 * na)
            _deposit_weights(k, h, n, bk, fk)
            _deposit_weights(m, h, n, bm, fm)
            for box in range(2):
                if box == 0 and not has1:
                    continue
                if box == 1 and not has2:
                    continue
                lo = lo1 if box == 0 else lo2
                hi = hi1 if box == 0 else hi2
                for j in range(d - 1):
                    s[j] = lo[j]
                while True:
                    skip = False
                    if box == 1 and has1:
                        inside = True
                        for j in range(d - 1):
                            if s[j] < lo1[j] or s[j] > hi1[j]:
                                inside = False
                        skip = inside
                    if not skip:
                        for i in range(d):
                            v = m[i]
                            for j in range(d - 1):
                                v += h * s[j] * E[j, i]
                            l[i] = v
                            nn[i] = v + a[i]
                        if _deposit_weights(l, h, n, bl, fl) and _deposit_weights(nn, h, n, bn, fn_):
                            F = bracket(rk, fn(l, p), rm, fn(nn, p)) * w
                            if F != 0.0:
                                _deposit(out, bk, fk, n, F)
                                _deposit(out, bl, fl, n, F)
                                _deposit(out, bm, fm, n, -F)
                                _deposit(out, bn, fn_, n, -F)
                    j = d - 2
                    while j >= 0:
                        s[j] += 1
                        if s[j] <= hi[j]:
                            break
                        s[j] = lo[j]
                        j -= 1
                    if j < 0:
                        break
    return out


def collision_at(rho, points, hq: float, box_radius: float | None = None, cutoff: float | None = None,
                 domain: tuple = (0.0, math.inf)):
    """C[rho] at arbitrary points by direct quadrature on the resonant set.

    ``rho`` is an AnalyticDensity or SpectralDensity.  m runs over hq Z^d inside
    a box, l over hq Z^(d-1) on the hyperplane.  Nodes with |k - m| < cutoff
    (default hq) are dropped and their absolute contribution is returned as
    the excluded estimate.  ``domain`` = (rmin, rmax) restricts all four
    frequencies to an annulus.  Returns (values, excluded).
    """
    fn, p = rho.evaluator()
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    d = pts.shape[1]
    if d < 2:
        raise DomainError("the collision operator needs d >= 2")
    rmin, rmax = float(domain[0]), float(domain[1])
    Rs = min(float(rho.support_radius), rmax)
    if not math.isfinite(Rs):
        raise DomainError("an unbounded density needs a finite domain radius")
    if box_radius is None:
        box_radius = 3.0 * Rs if math.isfinite(rho.support_radius) else rmax
    Jm = int(math.ceil(box_radius / hq))
    cutoff = hq if cutoff is None else float(cutoff)
    vals, excl = _collision_at(fn, p, pts, float(hq), Jm, Rs, rmin, rmax, cutoff)
    c0 = collision_constant(d)
    return c0 * vals, c0 * excl


def collision_operator(rho: SpectralDensity, max_nodes: int = 10**7) -> SpectralDensity:
    """C[rho] on the grid of rho by the conservative weak-form quadrature."""
    if not isinstance(rho, SpectralDensity):
        raise DomainError("grid mode needs a SpectralDensity; use collision_at for analytic densities")
    if np.any(rho.values < 0):
        raise DomainError("density must be nonnegative")
    if rho.values.size ** 2 > max_nodes * rho.values.size:
        raise ResourceError(f"grid with {rho.values.size} nodes exceeds the quadrature cap")
    if 3 * rho.support_radius > rho.J * rho.h + 1e-12:
        pass  # contributions beyond the grid are dropped; conservation is unaffected
    fn, p = rho.evaluator()
    Rs = rho.support_radius
    out = _collision_weak(fn, p, rho.d, rho.n, rho.h, Rs)
    vals = collision_constant(rho.d) * out.reshape(rho.values.shape) / rho.h**rho.d
    return SpectralDensity(vals, rho.h)


def conservation_report(rho: SpectralDensity, crho: SpectralDensity | None = None) -> dict:
    """Relative mass and energy defects of C[rho] against the scale of the gain term."""
    crho = collision_operator(rho) if crho is None else crho
    hd = rho.h**rho.d
    r2 = (rho.points() ** 2).sum(axis=-1)
    mass, energy = crho.values.sum() * hd, (r2 * crho.values).sum() * hd
    scale_m = np.abs(crho.values).sum() * hd
    scale_e = (r2 * np.abs(crho.values)).sum() * hd
    return {"mass": float(mass), "energy": float(energy), "mass_rel": float(abs(mass) / scale_m),
            "energy_rel": float(abs(energy) / scale_e), "scale_mass": float(scale_m),
            "scale_energy": float(scale_e)}


# ---------------------------------------------------------------- time stepping

@dataclass
class KWETrajectory:
    times: list
    states: list
    mass: list
    energy: list
    rejected: int = 0

    @property
    def mass_drift(self) -> float:
        return abs(self.mass[-1] - self.mass[0]) / abs(self.mass[0]) if self.mass[0] else 0.0

    @property
    def energy_drift(self) -> float:
        return abs(self.energy[-1] - self.energy[0]) / abs(self.energy[0]) if self.energy[0] else 0.0


def _rhs(vals, h):
    return collision_operator(SpectralDensity(np.maximum(vals, 0.0), h)).values


def kwe_step(rho: SpectralDensity, dt: float, method: str = "rk4") -> SpectralDensity:
    """One explicit step in kinetic time (rk4 or euler), no negativity control."""
    v, h = rho.values, rho.h
    if method == "euler":
        return rho.with_values(v + dt * _rhs(v, h))
    if method != "rk4":
        raise DomainError(f"unknown method {method!r}")
    k1 = _rhs(v, h)
    k2 = _rhs(v + 0.5 * dt * k1, h)
    k3 = _rhs(v + 0.5 * dt * k2, h)
    k4 = _rhs(v + dt * k3, h)
    return rho.with_values(v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))


def kwe_solve(rho0: SpectralDensity, t_final: float, dt: float, max_retries: int = 8,
              neg_tol: float = 1e-12) -> KWETrajectory:
    """RK4 in kinetic time; a step producing negative values is retried with dt/2."""
    if t_final < 0 or dt <= 0:
        raise DomainError("need t_final >= 0 and dt > 0")
    traj = KWETrajectory([0.0], [rho0], [rho0.mass()], [rho0.energy()])
    t, rho = 0.0, rho0
    scale = max(float(rho0.values.max()), 1e-300)
    while t < t_final - 1e-14:
        step = min(dt, t_final - t)
        for _ in range(max_retries + 1):
            new = kwe_step(rho, step)
            if new.values.min() >= -neg_tol * scale:
                break
            traj.rejected += 1
            step /= 2
        else:
            raise NumericError(f"density turned negative at t'={t:.4g} after {max_retries} step reductions")
        rho = new.with_values(np.maximum(new.values, 0.0))
        t += step
        traj.times.append(t)
        traj.states.append(rho)
        traj.mass.append(rho.mass())
        traj.energy.append(rho.energy())
    return traj


# ---------------------------------------------------------------- discrete main term

@numba.njit(cache=True)
def _kernel_K(om, t):
    if om == 0:
        return 0.25 * t * t
    x = math.sin(0.5 * t * om)
    return x * x / (om * om)


@numba.njit(cache=True)
def _main_term(ks, pts, table, K, t):
    """Bracketed lattice sum per target (prefactor applied by the caller).

    ``table`` holds rho on the integer box [-K, K]^d (zero outside).
    """
    T, d = ks.shape
    S = pts.shape[0]
    n = 2 * K + 1
    out = np.zeros(T)
    for it in range(T):
        k = ks[it]
        k2 = 0
        inbox = True
        idx = 0
        for x in range(d):
            k2 += k[x] * k[x]
            if abs(k[x]) > K:
                inbox = False
            else:
                idx = idx * n + (k[x] + K)
        rk = table[idx] if inbox else 0.0
        gain = 0.0
        loss = 0.0
        for i in range(S):
            m = pts[i]
            im = 0
            m2 = 0
            for x in range(d):
                im = im * n + (m[x] + K)
                m2 += m[x] * m[x]
            rm = table[im]
            for j in range(S):
                q = pts[j]
                jq = 0
                q2 = 0
                for x in range(d):
                    jq = jq * n + (q[x] + K)
                    q2 += q[x] * q[x]
                rq = table[jq]
                # gain: (m, n=q) in support, l = m + q - k
                v2 = 0
                inb = True
                iv = 0
                for x in range(d):
                    v = m[x] + q[x] - k[x]
                    v2 += v * v
                    if abs(v) > K:
                        inb = False
                    else:
                        iv = iv * n + (v + K)
                rl = table[iv] if inb else 0.0
                om = k2 + v2 - m2 - q2
                gain += _kernel_K(om, t) * rm * rq * (rl + rk)
                # loss: (l=q, m) in support, n = k + q - m
                if rk != 0.0:
                    w2 = 0
                    for x in range(d):
                        w = k[x] + q[x] - m[x]
                        w2 += w * w
                    om2 = k2 + q2 - m2 - w2
                    loss += _kernel_K(om2, t) * rq * rm
        out[it] = gain - 2.0 * rk * loss
    return out


def main_term_prefactor(params: PhysicalParams) -> float:
    d = params.d
    return 8.0 * params.lam**4 * params.eps ** (3 * d) / (2 * math.pi) ** (2 * d)


def main_term_sum(params: PhysicalParams, profile: DataProfile, t: float, k, max_pairs: float = 5e11) -> np.ndarray:
    """Second-order growth of E|u_hat(k, t)|^2 from the resonant lattice sum.

    8 lam^4 eps^(3d) / (2 pi)^(2d) * sum over k + l = m + n of
    sin^2(t Omega / 2) / Omega^2 * rho-bracket, rho = (2 pi)^d A(eps .)^2.
    ``k`` is one integer frequency or an array of them; returns an array.
    """
    d = params.d
    ks = np.atleast_2d(np.asarray(k, dtype=np.int64))
    if ks.shape[1] != d:
        raise DomainError(f"frequencies must have {d} components")
    if t == 0:
        return np.zeros(len(ks))
    pts = np.ascontiguousarray(support_points(params.eps, profile.support_radius, d), dtype=np.int64)
    if float(len(pts)) ** 2 * len(ks) > max_pairs:
        raise ResourceError(f"{len(pts)}^2 x {len(ks)} lattice terms exceed the cap {max_pairs:.3g}")
    K = int(np.abs(pts).max()) if len(pts) else 0
    ax = np.arange(-K, K + 1)
    grid = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=0)
    table = ((2 * np.pi) ** d * profile(params.eps * grid.astype(float)) ** 2).ravel()
    raw = _main_term(ks, pts, table, K, float(t))
    return main_term_prefactor(params) * raw


def constant_consistency(d: int = 2) -> dict:
    """Prefactor of the discrete main term that makes it converge to eps^d (t/T_kin) C.

    Summing sin^2(t Omega / 2)/Omega^2 over a resonance layer gives
    (pi t / 2) per unit of Omega, i.e. pi t / 2 times the co-area measure; with
    c0 = 4 pi / (2 pi)^(2d) this fixes the factor 8 = 4 pi / (pi / 2).
    The unscaled form lam^4 eps^(3d)/(2 pi)^(2d) is therefore 1/8 of it.
    """
    c0 = collision_constant(d)
    unit = math.pi / 2
    consistent = c0 / unit * (2 * math.pi) ** (2 * d)
    return {"c0": c0, "kernel_mass_per_t": unit, "factor": consistent, "unscaled_factor": 1.0,
            "ratio_unscaled_to_consistent": 1.0 / consistent}


def sinc2_selftest(t: float = 200.0, h: float | None = None, width: float = 400.0) -> float:
    """(2/t) * sum over Omega in h Z of h sin^2(t Omega/2)/Omega^2, with the tail added.

    Tends to int sin^2(x)/x^2 dx = pi.  With h < 2 pi / t the lattice sum of the
    band-limited kernel is exact (Poisson summation), so only the tail beyond
    ``width`` is approximated, by its mean value 1/width.
    """
    h = math.pi / t if h is None else h
    j = np.arange(1, int(width / h) + 1)
    om = j * h
    s = 2 * np.sum(np.sin(0.5 * t * om) ** 2 / om**2) * h + 0.25 * t * t * h
    tail = 1.0 / (j[-1] * h + 0.5 * h)
    return float(2.0 / t * (s + tail))


def sinc2_integral() -> float:
    """int_R sin^2(x)/x^2 dx by adaptive quadrature of (1 - cos 2x)/(2x^2)."""
    a = 50.0
    core, _ = integrate.quad(lambda x: (math.sin(x) / x) ** 2 if x else 1.0, 0.0, a, limit=500)
    # tail: int_a^inf 1/(2x^2) - cos(2x)/(2x^2)
    osc, _ = integrate.quad(lambda x: 1.0 / (2 * x * x), a, np.inf, weight="cos", wvar=2.0)
    return 2.0 * (core + 1.0 / (2 * a) - osc)


# ---------------------------------------------------------------- comparison with simulation

@dataclass
class KineticReport:
    t: float
    params: PhysicalParams
    ks: np.ndarray                 # integer frequencies (n, d)
    residual: np.ndarray           # LHS_k per frequency
    stderr: np.ndarray             # Monte Carlo standard error of LHS_k
    prediction: np.ndarray         # eps^d (t/T_kin) C(rho)(eps k)
    l1: float
    l1_noise: float
    scale: float                   # eps^d t / T_kin
    ratio: float                   # l1 / (t / T_kin)
    notes: list = field(default_factory=list)


def admissible_window(params: PhysicalParams, t_max: float = 1.0) -> tuple:
    lo = params.lam**-2 if params.lam > 0 else 0.0
    return lo, min(1.0, t_max)


def kinetic_comparison(sim, params: PhysicalParams, profile: DataProfile, t: float,
                       collision_values: np.ndarray | None = None, hq: float | None = None,
                       t_max: float = 1.0, time_index: int | None = None) -> KineticReport:
    """Residual E|u_hat(k,t)|^2 - eps^d rho(eps k) - eps^d (t/T_kin) C(rho)(eps k).

    ``sim`` is an EnsembleSpectrum; its control-variate estimate (exact
    initial spectrum plus the mean change, first-order corrected when the
    ensemble recorded it) is used.  C is evaluated with the
    analytic bump density when the profile is the default bump, otherwise on a
    tabulated density; pass ``collision_values`` (aligned with the returned
    frequencies) to reuse a computation.
    """
    lo, hi = admissible_window(params, t_max)
    if not lo - 1e-12 <= t <= hi + 1e-12:
        raise DomainError(f"t={t} outside the admissible window [lam^-2, min(1, t_max)] = [{lo:.4g}, {hi:.4g}]")
    if time_index is None:
        hits = np.flatnonzero(np.isclose(sim.times, t, rtol=0, atol=1e-12))
        if not len(hits):
            raise DomainError(f"time {t} not present in the simulation output {list(sim.times)}")
        time_index = int(hits[0])
    grid = sim.grid
    d, eps = params.d, params.eps
    kv = grid.wavevectors().reshape(d, -1).T
    delta = sim.growth()[time_index].ravel()
    gse = sim.growth_stderr()
    dse = None if gse is None else gse[time_index].ravel()
    reach = 3.0 * profile.support_radius / eps
    keep = (kv * kv).sum(axis=1) < reach**2
    ks = kv[keep]
    if collision_values is None:
        collision_values = collision_on_lattice(params, profile, ks, hq)
    tk = t / params.t_kin if math.isfinite(params.t_kin) else 0.0
    pred = eps**d * tk * collision_values
    resid = delta[keep] - pred
    # frequencies beyond the reach carry no prediction but may carry MC noise or aliasing
    outside = np.abs(delta[~keep]).sum()
    l1 = float(np.abs(resid).sum() + outside)
    l1_noise = float(dse.sum()) if dse is not None else float("nan")
    se = dse[keep] if dse is not None else np.full(len(ks), np.nan)
    ratio = l1 / tk if tk > 0 else math.nan  # no kinetic scale without nonlinearity
    notes = [f"window [{lo:.4g}, {hi:.4g}]", f"outside-reach l1 {outside:.3e}"]
    return KineticReport(t, params, ks, resid, se, pred, l1, l1_noise, eps**d * tk, ratio, notes)


def _is_default_bump(profile: DataProfile) -> tuple | None:
    name = profile.name
    if name.startswith("bump("):
        try:
            inner = name[5:-1]
            r, hgt = (float(x.split("=")[1]) for x in inner.split(","))
            return r, hgt
        except (ValueError, IndexError):
            return None
    return None


def collision_on_lattice(params: PhysicalParams, profile: DataProfile, ks: np.ndarray,
                         hq: float | None = None) -> np.ndarray:
    """C(rho)(eps k) on integer frequencies, using the signed-permutation symmetry of Z^d."""
    d, eps = params.d, params.eps
    bump = _is_default_bump(profile)
    if bump is not None:
        rho = bump_density(bump[0], bump[1], d)
    else:
        rho = density_from_profile(profile, (hq or eps) / 2, d)
    hq = eps if hq is None else hq
    ks = np.asarray(ks, dtype=np.int64)
    if bump is None:
        return collision_at(rho, eps * ks.astype(float), hq)[0]
    canon = np.sort(np.abs(ks), axis=1)
    uniq, inv = np.unique(canon, axis=0, return_inverse=True)
    vals, _ = collision_at(rho, eps * uniq.astype(float), hq)
    return vals[inv.ravel()]
