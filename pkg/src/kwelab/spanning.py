"""Spanning trees of paired diagrams, free/integrated edges, degrees and degeneracies.

Graph of a paired diagram.  Vertex 0 is the root; 1..n are the right-tree
interaction vertices v'_1..v'_n, n+1..2n the left ones; 2n+g is the initial
vertex with global number g (1..4n+2); 6n+2+p the vertex of pair p.  Edges are
the 6n+2 interaction lines (right tree first) followed by the 4n+2 upper pairing
edges.  Each edge has a lower and an upper end, and Kirchhoff's law at a vertex
v reads  sum_e sigma_v(e) k_e = 0  with sigma_v(e) = +1 when e lies above v.
Edges with frequency pinned to 0 (root edge, root pairing edges) are omitted.

The exact integer arithmetic of the construction runs in numba so that the
exhaustive n <= 3 checks stay fast; the Python objects wrap its output.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numba
import numpy as np

from .diagrams import (InteractionDiagram, PairedDiagram, build_diagram, detect_degeneracies,
                       enumerate_histories)
from .errors import InvariantError

ERR_RIGHT_LOOP = 1
ERR_TOP_LOOP = 2
ERR_FREE_COUNT = 3
ERR_DISCONNECTED = 4


@dataclass
class TreePairTemplate:
    """Pairing-independent encoding of a (left, right) history pair."""

    n: int
    left: InteractionDiagram
    right: InteractionDiagram
    labels: list            # edge labels, interaction lines then ("U", g)
    line_lo: np.ndarray     # lower vertex per edge
    line_up: np.ndarray     # upper vertex per edge
    below: np.ndarray       # (2n, 3) edge index of left/middle/right line below each vertex
    above: np.ndarray       # (2n,) edge index of the line leaving each vertex
    sign: np.ndarray        # (2n,) parity leaving each vertex
    parity: np.ndarray      # parity of each interaction line
    order_key: np.ndarray   # time-order key of each interaction line
    leafmask: np.ndarray    # bitmask of global initial vertices below each line
    right_top: int
    n_lines: int


def make_template(left: InteractionDiagram, right: InteractionDiagram) -> TreePairTemplate:
    n = left.n
    m = 2 * n + 1
    labels, lo, up, par, key, mask = [], [], [], [], [], []
    vid = {}
    for side, tr, base in (("R", right, 0), ("L", left, n)):
        for i in range(1, n + 1):
            vid[(side, i)] = base + i
    for tr, gbase, gside in ((right, m, 0), (left, 0, 1)):
        for ln in tr.lines.values():
            labels.append(ln.label)
            if ln.lower[0] == "leaf":
                lo.append(2 * n + gbase + ln.lower[1])
            else:
                lo.append(vid[(tr.side, ln.lower[1])])
            up.append(0 if ln.upper[0] == "root" else vid[(tr.side, ln.upper[1])])
            par.append(ln.parity)
            key.append(gside * (n + 2) + (n + 1 if ln.upper[0] == "root" else ln.upper[1]))
            mask.append(sum(1 << (gbase + j - 1) for j in ln.leaves))
    idx = {lab: e for e, lab in enumerate(labels)}
    n_lines = len(labels)
    for g in range(1, 2 * m + 1):
        labels.append(("U", g))
        lo.append(-1)  # filled per pairing
        up.append(2 * n + g)
    below = np.zeros((2 * n, 3), dtype=np.int64)
    above = np.zeros(2 * n, dtype=np.int64)
    sign = np.zeros(2 * n, dtype=np.int64)
    for side, tr, base in (("R", right, 0), ("L", left, n)):
        for i in range(1, n + 1):
            below[base + i - 1] = [idx[lab] for lab in tr.vertex_below[i - 1]]
            above[base + i - 1] = idx[tr.vertex_above[i - 1]]
            sign[base + i - 1] = tr.vertex_sign(i)
    return TreePairTemplate(n, left, right, labels, np.array(lo, dtype=np.int64), np.array(up, dtype=np.int64),
                            below, above, sign, np.array(par, dtype=np.int64), np.array(key, dtype=np.int64),
                            np.array(mask, dtype=np.int64), idx[right.slice_line[n][0]], n_lines)


@numba.njit(cache=True)
def _find(uf, a):
    while uf[a] != a:
        uf[a] = uf[uf[a]]
        a = uf[a]
    return a


@numba.njit(cache=True)
def _spanning_core(n, line_lo_t, line_up, below, right_top, n_lines, pairs):
    """Spanning-tree construction and integration coefficients for one pairing.

    Returns (err, free, coeff) where free lists the free edge indices in the order
    they were left out and coeff[e, i] is the coefficient of free edge i in k_e.
    """
    nV = 8 * n + 4
    nE = line_lo_t.shape[0]
    nfree_expected = 2 * n + 1
    lo = line_lo_t.copy()
    for p in range(pairs.shape[0]):
        for s in range(2):
            g = pairs[p, s]
            lo[n_lines + g - 1] = 6 * n + 2 + p + 1
    uf = np.arange(nV)
    intree = np.zeros(nE, dtype=np.bool_)
    err = 0
    for e in range(n_lines, nE):
        a = _find(uf, lo[e])
        b = _find(uf, line_up[e])
        uf[a] = b
        intree[e] = True
    free = np.full(nfree_expected, -1, dtype=np.int64)
    nf = 0
    for v in range(2 * n):
        for o in (2, 1, 0):
            e = below[v, o]
            a = _find(uf, lo[e])
            b = _find(uf, line_up[e])
            if a == b:
                if o == 2:
                    err = 1
                if nf < nfree_expected:
                    free[nf] = e
                nf += 1
            else:
                uf[a] = b
                intree[e] = True
    a = _find(uf, lo[right_top])
    b = _find(uf, line_up[right_top])
    if a == b:
        err = 2
    else:
        uf[a] = b
        intree[right_top] = True
    # the left top line is never considered, so it is free
    for e in range(n_lines):
        if not intree[e] and e != right_top:
            is_listed = False
            for i in range(min(nf, nfree_expected)):
                if free[i] == e:
                    is_listed = True
            if not is_listed:
                if nf < nfree_expected:
                    free[nf] = e
                nf += 1
    coeff = np.zeros((nE, nfree_expected), dtype=np.int64)
    if nf != nfree_expected:
        return 3, free, coeff
    if err != 0:
        return err, free, coeff
    # orient the tree towards the root by breadth-first search
    deg = np.zeros(nV, dtype=np.int64)
    for e in range(nE):
        if intree[e]:
            deg[lo[e]] += 1
            deg[line_up[e]] += 1
    start = np.zeros(nV + 1, dtype=np.int64)
    for v in range(nV):
        start[v + 1] = start[v] + deg[v]
    fill = start[:-1].copy()
    adj = np.zeros(start[nV], dtype=np.int64)
    for e in range(nE):
        if intree[e]:
            adj[fill[lo[e]]] = e
            fill[lo[e]] += 1
            adj[fill[line_up[e]]] = e
            fill[line_up[e]] += 1
    parent_edge = np.full(nV, -1, dtype=np.int64)
    seen = np.zeros(nV, dtype=np.bool_)
    order = np.zeros(nV, dtype=np.int64)
    seen[0] = True
    head, tail = 0, 1
    while head < tail:
        v = order[head]
        head += 1
        for q in range(start[v], start[v + 1]):
            e = adj[q]
            w = lo[e] if line_up[e] == v else line_up[e]
            if not seen[w]:
                seen[w] = True
                parent_edge[w] = e
                order[tail] = w
                tail += 1
    if tail != nV:
        return 4, free, coeff
    # S[v] = sum over w in the subtree of v of sigma_w(f) for free f at w
    S = np.zeros((nV, nfree_expected), dtype=np.int64)
    for i in range(nfree_expected):
        f = free[i]
        S[lo[f], i] += 1       # f lies above its lower end
        S[line_up[f], i] -= 1  # and below its upper end
        coeff[f, i] = 1
    for q in range(nV - 1, 0, -1):
        v = order[q]
        e = parent_edge[v]
        sv = 1 if lo[e] == v else -1
        for i in range(nfree_expected):
            coeff[e, i] = -sv * S[v, i]
        w = lo[e] if line_up[e] == v else line_up[e]
        for i in range(nfree_expected):
            S[w, i] += S[v, i]
    return 0, free, coeff


@numba.njit(cache=True)
def _kirchhoff_ok(n, lo, line_up, coeff):
    """Every vertex balance sum_e sigma_v(e) k_e vanishes identically."""
    nV = 8 * n + 4
    bal = np.zeros((nV, coeff.shape[1]), dtype=np.int64)
    for e in range(lo.shape[0]):
        for i in range(coeff.shape[1]):
            bal[lo[e], i] += coeff[e, i]
            bal[line_up[e], i] -= coeff[e, i]
    return np.all(bal == 0)


@numba.njit(cache=True)
def _check_all(n, line_lo_t, line_up, below, right_top, n_lines, order_key, leafmask, parity, sign,
               pair_batch):
    """Run the construction and every exact check for a batch of pairings.

    Returns an (npairings, 8) table: error code, free count, kirchhoff ok,
    coefficients in {-1,0,1}, time ordering ok, n0, n1, n2; and a (npairings, 2n)
    table of degrees and a (npairings, 2n) bitmask of degeneracies (bit j+k-1 for
    the offset pair {j,k}).
    """
    P = pair_batch.shape[0]
    out = np.zeros((P, 8), dtype=np.int64)
    degrees = np.zeros((P, 2 * n), dtype=np.int64)
    degen = np.zeros((P, 2 * n), dtype=np.int64)
    ng = 4 * n + 2
    for p in range(P):
        pairs = pair_batch[p]
        err, free, coeff = _spanning_core(n, line_lo_t, line_up, below, right_top, n_lines, pairs)
        out[p, 0] = err
        nf = 0
        for i in range(free.shape[0]):
            if free[i] >= 0:
                nf += 1
        out[p, 1] = nf
        if err != 0:
            continue
        lo = line_lo_t.copy()
        for q in range(pairs.shape[0]):
            for s in range(2):
                lo[n_lines + pairs[q, s] - 1] = 6 * n + 2 + q + 1
        out[p, 2] = 1 if _kirchhoff_ok(n, lo, line_up, coeff) else 0
        ok = 1
        for e in range(coeff.shape[0]):
            for i in range(coeff.shape[1]):
                if coeff[e, i] < -1 or coeff[e, i] > 1:
                    ok = 0
        out[p, 3] = ok
        tord = 1
        isfree = np.zeros(coeff.shape[0], dtype=np.bool_)
        for i in range(free.shape[0]):
            isfree[free[i]] = True
        for e in range(n_lines):
            if isfree[e]:
                continue
            for i in range(free.shape[0]):
                if order_key[free[i]] < order_key[e] and coeff[e, i] != 0:
                    tord = 0
        out[p, 4] = tord
        for v in range(2 * n):
            c = 0
            for o in range(3):
                if isfree[below[v, o]]:
                    c += 1
            degrees[p, v] = c
            out[p, 5 + min(c, 2)] += 1
        partner = np.zeros(ng + 1, dtype=np.int64)
        for q in range(pairs.shape[0]):
            partner[pairs[q, 0]] = pairs[q, 1]
            partner[pairs[q, 1]] = pairs[q, 0]
        for v in range(2 * n):
            bits = 0
            for j in range(3):
                for k in range(j + 1, 3):
                    ej, ek = below[v, j], below[v, k]
                    if parity[ej] * parity[ek] != -1:
                        continue
                    U = leafmask[ej] | leafmask[ek]
                    closed = True
                    for g in range(1, ng + 1):
                        if (U >> (g - 1)) & 1:
                            if not (U >> (partner[g] - 1)) & 1:
                                closed = False
                    if closed:
                        bits |= 1 << (j + k - 1)
            degen[p, v] = bits
    return out, degrees, degen


def pairing_batch(template: TreePairTemplate) -> np.ndarray:
    """All admissible pairings as an (count, 2n+1, 2) array of global vertex numbers."""
    m = 2 * template.n + 1
    par = template.left.initial_parities + template.right.initial_parities
    plus = [g for g in range(1, 2 * m + 1) if par[g - 1] == 1]
    minus = [g for g in range(1, 2 * m + 1) if par[g - 1] == -1]
    perms = np.array(list(itertools.permutations(minus)), dtype=np.int64)
    out = np.empty((len(perms), m, 2), dtype=np.int64)
    out[:, :, 0] = np.array(plus)[None, :]
    out[:, :, 1] = perms
    return out


@dataclass
class SpanningTree:
    """Free and integrated edges of a paired diagram with integration coefficients.

    ``coeffs[e, i]`` is the coefficient of the i-th free frequency in k_e, for
    every edge e (interaction lines and upper pairing edges) in ``labels`` order.
    Free edges are listed in time order (right tree before left, then by the
    index of the vertex above them).
    """

    paired: PairedDiagram
    template: TreePairTemplate
    free_index: np.ndarray
    coeffs: np.ndarray

    @property
    def labels(self) -> list:
        return self.template.labels

    @property
    def free_edges(self) -> list:
        return [self.template.labels[e] for e in self.free_index]

    @property
    def integrated_edges(self) -> list:
        fr = set(self.free_index.tolist())
        return [lab for e, lab in enumerate(self.template.labels) if e not in fr]

    def coefficient(self, i: int, label) -> int:
        return int(self.coeffs[self.template.labels.index(label), i])

    def reconstruct(self, free_values: np.ndarray) -> dict:
        """Map (2n+1, d) integer free frequencies to every edge frequency."""
        k = self.coeffs @ np.asarray(free_values, dtype=np.int64)
        return {lab: k[e] for e, lab in enumerate(self.template.labels)}

    def line_coeffs_in_pairs(self) -> np.ndarray:
        """Coefficients of every edge in terms of the pair frequencies.

        Pair p's frequency is that of its +1 initial vertex; the -1 partner
        carries minus it.  Composes the integration coefficients with the free
        edges' expression through pair frequencies.
        """
        t = self.template
        n = t.n
        par = t.left.initial_parities + t.right.initial_parities
        pairs = self.paired.pairs
        B = np.zeros((len(self.free_index), len(pairs)), dtype=np.int64)
        for i, e in enumerate(self.free_index):
            mask = int(t.leafmask[e])
            for p, (a, b) in enumerate(pairs):
                for g in (a, b):
                    if (mask >> (g - 1)) & 1:
                        B[i, p] += par[g - 1]
        return self.coeffs @ B

    def time_keys(self) -> np.ndarray:
        return self.template.order_key


def _pairs_array(paired: PairedDiagram) -> np.ndarray:
    par = paired.left.initial_parities + paired.right.initial_parities
    rows = []
    for a, b in paired.pairs:
        rows.append((a, b) if par[a - 1] == 1 else (b, a))
    return np.array(rows, dtype=np.int64)


_TEMPLATE_CACHE: dict = {}


def template_for(paired: PairedDiagram) -> TreePairTemplate:
    key = (paired.left.history, paired.right.history)
    t = _TEMPLATE_CACHE.get(key)
    if t is None:
        t = make_template(paired.left, paired.right)
        _TEMPLATE_CACHE[key] = t
    return t


def build_spanning_tree(paired: PairedDiagram) -> SpanningTree:
    t = template_for(paired)
    err, free, coeff = _spanning_core(t.n, t.line_lo, t.line_up, t.below, t.right_top, t.n_lines,
                                      _pairs_array(paired))
    if err:
        raise InvariantError(f"spanning-tree construction failed with code {err} for pairing {paired.pairs}")
    order = np.argsort(t.order_key[free], kind="stable")
    return SpanningTree(paired, t, free[order], coeff[:, order])


@dataclass(frozen=True)
class DegreeProfile:
    degrees: tuple         # per interaction vertex, right tree first
    n0: int
    n1: int
    n2: int


def classify_degrees(tree: SpanningTree) -> DegreeProfile:
    t = tree.template
    fr = set(tree.free_index.tolist())
    degs = []
    for v in range(2 * t.n):
        c = sum(1 for e in t.below[v] if int(e) in fr)
        if c > 2:
            raise InvariantError(f"vertex {v + 1} has degree {c}")
        degs.append(c)
    return DegreeProfile(tuple(degs), degs.count(0), degs.count(1), degs.count(2))


@dataclass
class ExhaustiveReport:
    n: int
    configurations: int = 0
    errors: int = 0
    bad_free_count: int = 0
    bad_kirchhoff: int = 0
    bad_coeff_range: int = 0
    bad_time_order: int = 0
    bad_counting: int = 0
    bad_first_degree: int = 0
    first_degree_one: int = 0
    first_degree_one_without_degeneracy: int = 0

    @property
    def spanning_ok(self) -> bool:
        return self.configurations > 0 and self.errors == self.bad_free_count == self.bad_kirchhoff \
            == self.bad_coeff_range == self.bad_time_order == 0

    @property
    def counting_ok(self) -> bool:
        return self.configurations > 0 and self.bad_counting == self.bad_first_degree \
            == self.first_degree_one_without_degeneracy == 0


def exhaustive_check(n: int) -> ExhaustiveReport:
    """Every history pair and pairing at order n: spanning-tree and degree identities."""
    rep = ExhaustiveReport(n)
    hs = enumerate_histories(n)
    for hl in hs:
        left = build_diagram(n, hl, 1, "L")
        for hr in hs:
            right = build_diagram(n, hr, -1, "R")
            t = make_template(left, right)
            batch = pairing_batch(t)
            out, degrees, degen = _check_all(n, t.line_lo, t.line_up, t.below, t.right_top, t.n_lines,
                                             t.order_key, t.leafmask, t.parity, t.sign, batch)
            rep.configurations += len(batch)
            rep.errors += int(np.count_nonzero(out[:, 0]))
            rep.bad_free_count += int(np.count_nonzero(out[:, 1] != 2 * n + 1))
            ok = out[:, 0] == 0
            rep.bad_kirchhoff += int(np.count_nonzero(ok & (out[:, 2] != 1)))
            rep.bad_coeff_range += int(np.count_nonzero(ok & (out[:, 3] != 1)))
            rep.bad_time_order += int(np.count_nonzero(ok & (out[:, 4] != 1)))
            n0, n1, n2 = out[:, 5], out[:, 6], out[:, 7]
            rep.bad_counting += int(np.count_nonzero(ok & ((n0 + n1 + n2 != 2 * n) | (n1 + 2 * n2 != 2 * n))))
            first = degrees[:, 0]  # v'_1
            rep.bad_first_degree += int(np.count_nonzero(ok & (first > 1)))
            one = ok & (first == 1)
            rep.first_degree_one += int(np.count_nonzero(one))
            rep.first_degree_one_without_degeneracy += int(np.count_nonzero(one & (degen[:, 0] == 0)))
    return rep
