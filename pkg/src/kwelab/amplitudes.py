"""Numerical evaluation of paired-diagram amplitudes F(G, P).

    F(G,P) = (-1)^(n + p + p') lam^(4n) / (2 pi)^(2dn)
             * sum over pair frequencies q_1..q_{2n+1} of
               prod_p (2 pi)^d eps^d A(eps q_p)^2 * prod_v trunc_v * T_L * T_R

p (p') counts left (right) vertices whose outgoing wave has parity -1, trunc_v
is the factor 1 - delta - delta of the truncated product at vertex v, and
T_L, T_R are the time-simplex integrals of each tree, functions of the integer
resonance moduli only.  All edge frequencies are rebuilt from the pair
frequencies through the spanning-tree coefficients; the pair frequencies are a
unimodular change of variables from the free frequencies, and restricting them
to the support of A loses no term.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numba
import numpy as np

from .diagrams import PairedDiagram, truncation_pairs
from .errors import DomainError, ResourceError
from .params_grid import PhysicalParams
from .random_data import DataProfile, profile_on_lattice, support_points
from .simplex import resolvent_integral, tree_phases, simplex_integral
from .spanning import SpanningTree, build_spanning_tree

DEFAULT_MAX_TERMS = 10**10
DEFAULT_MAX_KEYS = 5 * 10**7


@dataclass
class AmplitudeProblem:
    n: int
    E: np.ndarray          # (lines, pairs) coefficients of each interaction line in the pair frequencies
    vL: np.ndarray         # (n, 4) line indices (left, middle, right, outgoing) per left vertex
    sL: np.ndarray
    vR: np.ndarray
    sR: np.ndarray
    trunc: np.ndarray      # (2n, 2, 2) line pairs of the truncation factors
    sign: int              # (-1)^(n + p + p')


def amplitude_problem(paired: PairedDiagram, tree: SpanningTree | None = None) -> AmplitudeProblem:
    tree = build_spanning_tree(paired) if tree is None else tree
    t = tree.template
    Eall = tree.line_coeffs_in_pairs()
    E = Eall[: t.n_lines]
    idx = {lab: e for e, lab in enumerate(t.labels)}
    n = paired.n

    def verts(tr):
        v = np.array([[idx[lab] for lab in tr.vertex_below[i]] + [idx[tr.vertex_above[i]]] for i in range(n)],
                     dtype=np.int64)
        s = np.array([tr.vertex_sign(i) for i in range(1, n + 1)], dtype=np.int64)
        return v, s

    vL, sL = verts(paired.left)
    vR, sR = verts(paired.right)
    tr_list = []
    for tr in (paired.left, paired.right):
        for i in range(1, n + 1):
            (a, b), (c, d) = truncation_pairs(tr, i)
            tr_list.append([[idx[a], idx[b]], [idx[c], idx[d]]])
    sign = (-1) ** (n + paired.left.minus_count() + paired.right.minus_count())
    return AmplitudeProblem(n, E, vL, sL, vR, sR, np.array(tr_list, dtype=np.int64), sign)


@numba.njit(cache=True, inline="always")
def _sq(k, e):
    acc = 0
    for x in range(k.shape[1]):
        acc += k[e, x] * k[e, x]
    return acc


@numba.njit(cache=True, inline="always")
def _omega(k, v, s):
    return _sq(k, v[2]) - _sq(k, v[0]) + s * (_sq(k, v[1]) - _sq(k, v[3]))


@numba.njit(cache=True)
def _amplitude_kernel(pts, w, first, wfirst, E, vL, sL, vR, sR, trunc, O, R, TL, TR, mark, usedL, usedR):
    """Sum over all pair-frequency tuples.  mark=True only records which keys occur.

    The first pair frequency runs over ``pts[first]`` with weights ``wfirst``
    (orbit representatives times orbit sizes when the summand is symmetric).
    """
    P = pts.shape[0]
    d = pts.shape[1]
    npairs = E.shape[1]
    nlines = E.shape[0]
    n = vL.shape[0]
    S = TL.shape[0]
    acc = np.zeros(S, dtype=np.complex128)
    nterms = 0
    idx = np.zeros(npairs, dtype=np.int64)
    # prefix[l] = sum_{p<l} E[:, p] * q_p;  wprefix[l] = prod_{p<l} weight_p
    prefix = np.zeros((npairs + 1, nlines, d), dtype=np.int64)
    wprefix = np.ones(npairs + 1)
    k = prefix[npairs]
    level = 0
    while True:
        for l in range(level, npairs):
            if l == 0:
                q = pts[first[idx[0]]]
                wq = wfirst[idx[0]]
            else:
                q = pts[idx[l]]
                wq = w[idx[l]]
            for e in range(nlines):
                c = E[e, l]
                for x in range(d):
                    prefix[l + 1, e, x] = prefix[l, e, x] + c * q[x]
            wprefix[l + 1] = wprefix[l] * wq
        factor = 1
        for v in range(2 * n):
            fv = 1
            for r in range(2):
                a, b = trunc[v, r, 0], trunc[v, r, 1]
                zero = True
                for x in range(d):
                    if k[a, x] + k[b, x] != 0:
                        zero = False
                if zero:
                    fv -= 1
            factor *= fv
            if factor == 0:
                break
        if factor != 0:
            keyL = 0
            keyR = 0
            mult = 1
            for v in range(n):
                keyL += (_omega(k, vL[v], sL[v]) + O) * mult
                keyR += (_omega(k, vR[v], sR[v]) + O) * mult
                mult *= R
            nterms += 1
            if mark:
                usedL[keyL] = True
                usedR[keyR] = True
            else:
                wt = factor * wprefix[npairs]
                for s_ in range(S):
                    acc[s_] += wt * TL[s_, keyL] * TR[s_, keyR]
        # advance the odometer
        l = npairs - 1
        while l >= 0:
            idx[l] += 1
            if idx[l] < (first.shape[0] if l == 0 else P):
                break
            idx[l] = 0
            l -= 1
        if l < 0:
            break
        level = l
    return acc, nterms


def _omega_bound(prob: AmplitudeProblem, kcap: float) -> int:
    rowcap = np.abs(prob.E).sum(axis=1) * kcap
    sq = rowcap**2
    b = 0.0
    for v in list(prob.vL) + list(prob.vR):
        b = max(b, float(sq[v].sum()))
    return int(math.ceil(b)) + 1


def _decode_keys(keys: np.ndarray, n: int, O: int, R: int) -> np.ndarray:
    om = np.empty((len(keys), n))
    rem = keys.copy()
    for v in range(n):
        om[:, v] = rem % R - O
        rem //= R
    return om


def symmetry_reduction(pts: np.ndarray, w: np.ndarray):
    """Orbit representatives of the first pair frequency under signed coordinate permutations.

    Every summand depends on the frequencies only through squared lengths and
    vanishing sums, both invariant under the lattice symmetries applied to all
    frequencies at once, so the first frequency may be restricted to orbit
    representatives weighted by orbit size.  Falls back to the full set when
    the weights themselves are not symmetric.
    """
    canon = np.sort(np.abs(pts), axis=1)
    lookup = {tuple(q): i for i, q in enumerate(pts.tolist())}
    rep_of = np.array([lookup.get(tuple(c), -1) for c in canon.tolist()])
    if np.any(rep_of < 0) or not np.allclose(w[rep_of], w, rtol=1e-13, atol=0):
        return np.arange(len(pts), dtype=np.int64), w.copy()
    reps, counts = np.unique(rep_of, return_counts=True)
    return reps.astype(np.int64), w[reps] * counts


_RESOLVENT_CACHE: dict = {}


def _resolvent_cached(omegas: tuple, t: float, eta):
    key = (omegas, t, eta)
    if key not in _RESOLVENT_CACHE:
        _RESOLVENT_CACHE[key] = resolvent_integral(tree_phases(np.array(omegas, dtype=float)), t, eta)
    return _RESOLVENT_CACHE[key]


@dataclass
class AmplitudeResult:
    values: dict            # (method, t) -> complex F(G,P)
    nterms: int
    runtime: float


def evaluate_amplitude(paired: PairedDiagram, times, params: PhysicalParams, profile: DataProfile,
                       methods=("time",), tree: SpanningTree | None = None, freq_cap: float | None = None,
                       eta: float | None = None, max_terms: int = DEFAULT_MAX_TERMS,
                       max_keys: int = DEFAULT_MAX_KEYS) -> AmplitudeResult:
    """F(G,P) at several times with the time-simplex and/or resolvent evaluations."""
    t0 = time.perf_counter()
    times = [float(t) for t in np.atleast_1d(times)]
    for m in methods:
        if m not in ("time", "resolvent"):
            raise DomainError(f"unknown method {m!r}")
    prob = amplitude_problem(paired, tree)
    n, d = prob.n, params.d
    pts = support_points(params.eps, profile.support_radius, d)
    if freq_cap is not None:
        pts = pts[(pts * pts).sum(axis=1) <= freq_cap**2]
    a = profile_on_lattice(profile, params.eps, pts)
    keep = a != 0
    pts = np.ascontiguousarray(pts[keep], dtype=np.int64)
    w = (2 * np.pi) ** d * params.eps**d * a[keep] ** 2
    npairs = 2 * n + 1
    total = float(len(pts)) ** npairs
    if total > max_terms:
        raise ResourceError(f"{len(pts)}^{npairs} = {total:.3g} frequency tuples exceed the cap {max_terms:.3g}")
    kcap = float(np.sqrt((pts * pts).sum(axis=1).max())) if len(pts) else 0.0
    O = _omega_bound(prob, kcap)
    R = 2 * O + 1
    nkeys = R**n
    if nkeys > max_keys:
        raise ResourceError(f"resonance-modulus table of size {nkeys} exceeds the cap {max_keys}")
    first, wfirst = symmetry_reduction(pts, w)
    pre = prob.sign * params.lam ** (4 * n) / (2 * np.pi) ** (2 * d * n)
    usedL = np.zeros(nkeys, dtype=np.bool_)
    usedR = np.zeros(nkeys, dtype=np.bool_)
    dummy = np.zeros((1, 1), dtype=np.complex128)
    need_mark = "resolvent" in methods
    if need_mark:
        _, nterms = _amplitude_kernel(pts, w, first, wfirst, prob.E, prob.vL, prob.sL, prob.vR, prob.sR, prob.trunc, O, R,
                                      dummy, dummy, True, usedL, usedR)
    combos = [(m, t) for m in methods for t in times]
    TL = np.zeros((len(combos), nkeys), dtype=np.complex128)
    TR = np.zeros((len(combos), nkeys), dtype=np.complex128)
    if "time" in methods:
        phases_all = tree_phases(_decode_keys(np.arange(nkeys, dtype=np.int64), n, O, R))
    used = np.flatnonzero(usedL | usedR)
    used_om = _decode_keys(used, n, O, R).astype(np.int64)
    for c, (m, t) in enumerate(combos):
        if m == "time":
            vals = simplex_integral(phases_all, t)
            TL[c], TR[c] = vals, vals
        else:
            for key, om in zip(used, used_om):
                TL[c, key] = TR[c, key] = _resolvent_cached(tuple(int(x) for x in om), t, eta)
    acc, nterms = _amplitude_kernel(pts, w, first, wfirst, prob.E, prob.vL, prob.sL, prob.vR, prob.sR, prob.trunc, O, R,
                                    TL, TR, False, usedL, usedR)
    values = {combo: complex(pre * acc[c]) for c, combo in enumerate(combos)}
    return AmplitudeResult(values, int(nterms), time.perf_counter() - t0)


def eval_amplitude_time(paired: PairedDiagram, tree: SpanningTree | None, t: float, params: PhysicalParams,
                        profile: DataProfile, freq_cap: float | None = None) -> complex:
    return evaluate_amplitude(paired, [t], params, profile, ("time",), tree, freq_cap).values[("time", float(t))]


def eval_amplitude_resolvent(paired: PairedDiagram, tree: SpanningTree | None, t: float, params: PhysicalParams,
                             profile: DataProfile, freq_cap: float | None = None,
                             eta: float | None = None) -> complex:
    r = evaluate_amplitude(paired, [t], params, profile, ("resolvent",), tree, freq_cap, eta)
    return r.values[("resolvent", float(t))]


def iterate_from_diagrams(u0_coeff, n: int, t: float, lam: float, d: int, support: np.ndarray) -> dict:
    """u^n_hat(k, t) of one realization assembled directly from the tree expansion.

    ``u0_coeff`` maps an integer tuple to the coefficient u0_hat(k); ``support``
    lists the frequencies where it may be nonzero.  Brute force over initial
    frequencies, meant for tiny supports only.
    """
    from .diagrams import build_diagram, enumerate_histories
    import itertools

    support = [tuple(int(x) for x in k) for k in support]
    vals = {k: u0_coeff(k) for k in support}
    neg = {k: np.conj(u0_coeff(tuple(-x for x in k))) for k in support}
    out: dict = {}
    pre = (-1j * lam**2 / (2 * np.pi) ** d) ** n
    for h in enumerate_histories(n):
        tr = build_diagram(n, h, 1, "L")
        par = tr.initial_parities
        sign = (-1) ** tr.minus_count()
        for ks in itertools.product(support, repeat=2 * n + 1):
            coef = 1.0 + 0j
            for k, s in zip(ks, par):
                coef *= vals[k] if s == 1 else neg[k]
            if coef == 0:
                continue
            freq = {}
            for lab, ln in tr.lines.items():
                freq[lab] = np.sum([ks[j - 1] for j in ln.leaves], axis=0)
            factor = 1
            for i in range(1, n + 1):
                fv = 1
                for a, b in truncation_pairs(tr, i):
                    if not np.any(freq[a] + freq[b]):
                        fv -= 1
                factor *= fv
            if factor == 0:
                continue
            from .diagrams import resonance_modulus
            om = [resonance_modulus(tr, freq, i) for i in range(1, n + 1)]
            T = complex(simplex_integral(tree_phases(np.array(om, dtype=float)), t))
            kout = tuple(int(x) for x in freq[tr.slice_line[n][0]])
            phase = np.exp(-1j * t * sum(x * x for x in kout))
            out[kout] = out.get(kout, 0) + pre * sign * factor * T * phase * coef
    return out


@dataclass
class DiagramSum:
    n: int
    times: list
    methods: tuple
    total: dict             # (method, t) -> sum over all (G, P)
    rows: list              # per paired diagram: (left history, right history, pairing index, values, runtime)


def diagram_sum(n: int, times, params: PhysicalParams, profile: DataProfile, methods=("time",),
                freq_cap: float | None = None, eta: float | None = None,
                max_terms: int = DEFAULT_MAX_TERMS) -> DiagramSum:
    """Sum of F(G, P) over all history pairs and pairings: the expectation of ||u^n(t)||^2."""
    from .diagrams import all_paired_diagrams

    times = [float(t) for t in np.atleast_1d(times)]
    total = {(m, t): 0j for m in methods for t in times}
    rows = []
    for paired in all_paired_diagrams(n):
        r = evaluate_amplitude(paired, times, params, profile, methods, None, freq_cap, eta, max_terms)
        for key, v in r.values.items():
            total[key] += v
        rows.append((paired.left.history, paired.right.history, paired.index, r.values, r.runtime))
    return DiagramSum(n, times, tuple(methods), total, rows)
