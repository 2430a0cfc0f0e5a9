"""Interaction histories, ternary interaction trees, pairings of two trees and degeneracies.

Conventions.  Slices are numbered 0..n from the initial data upwards; slice i
holds 1 + 2(n-i) waves, labelled j = 1..1+2(n-i).  Vertex v_i merges waves
l_i, l_i+1, l_i+2 of slice i-1 into wave l_i of slice i.  Parities follow
(-1, s, +1) below a vertex whose outgoing wave has parity s.

A wave that is not merged at a slice continues unchanged; such copies are one
physical line of the graph.  Lines are labelled by the (slice, position) of
their lowest copy, so ("L", 0, j) is the line rising from initial vertex j of
the left tree and ("L", i, l_i) the line leaving vertex v_i.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import factorial, prod

import numpy as np

from .errors import DomainError, ResourceError

DEFAULT_MAX_ORDER = 5


def double_factorial_odd(n: int) -> int:
    """(2n-1)!! = 1*3*...*(2n-1)."""
    return prod(range(1, 2 * n, 2)) if n > 0 else 1


def enumerate_histories(n: int, max_order: int = DEFAULT_MAX_ORDER) -> list:
    """All l = (l_1..l_n) with l_i in {1..2(n-i)+1}, lexicographic."""
    if n < 1:
        raise DomainError("order n must be at least 1")
    if n > max_order:
        raise ResourceError(f"order n={n} exceeds the enumeration cap {max_order}")
    ranges = [range(1, 2 * (n - i) + 2) for i in range(1, n + 1)]
    return [tuple(h) for h in itertools.product(*ranges)]


@dataclass(frozen=True)
class Line:
    """One physical edge of an interaction tree."""

    label: tuple          # (side, slice, position) of the lowest copy
    parity: int
    lower: tuple          # ("leaf", j) or ("vertex", i)
    upper: tuple          # ("vertex", i) or ("root",)
    offset: int | None    # 0, 1, 2 = left, middle, right below the upper vertex; None at the root
    leaves: frozenset     # initial positions below (1-based)


@dataclass
class InteractionDiagram:
    """One tree of the Duhamel expansion of u^n."""

    n: int
    history: tuple
    top_parity: int
    side: str
    parities: list        # parities[i][j-1] = sigma_{i,j}
    slice_line: list      # slice_line[i][j-1] = line label carrying wave (i, j)
    lines: dict           # label -> Line
    vertex_below: list    # vertex_below[i-1] = labels of (left, middle, right) lines below v_i
    vertex_above: list    # vertex_above[i-1] = label of the line leaving v_i

    @property
    def initial_parities(self) -> list:
        return list(self.parities[0])

    def parity(self, i: int, j: int) -> int:
        return self.parities[i][j - 1]

    def In(self, i: int, j: int) -> frozenset:
        """Initial positions below the wave (i, j)."""
        return self.lines[self.slice_line[i][j - 1]].leaves

    def In_vertex(self, i: int) -> frozenset:
        return self.lines[self.vertex_above[i - 1]].leaves

    def vertex_sign(self, i: int) -> int:
        """Parity of the wave leaving v_i."""
        return self.lines[self.vertex_above[i - 1]].parity

    def minus_count(self) -> int:
        """Number of vertices whose outgoing wave has parity -1."""
        return sum(1 for i in range(1, self.n + 1) if self.vertex_sign(i) == -1)


def build_diagram(n: int, history, top_parity: int, side: str = "L") -> InteractionDiagram:
    history = tuple(int(h) for h in history)
    if len(history) != n:
        raise DomainError(f"history {history} has length {len(history)}, expected {n}")
    for i, li in enumerate(history, start=1):
        if not 1 <= li <= 2 * (n - i) + 1:
            raise DomainError(f"l_{i}={li} outside 1..{2 * (n - i) + 1}")
    if top_parity not in (1, -1):
        raise DomainError("top parity must be +1 or -1")

    par = [None] * (n + 1)
    par[n] = [top_parity]
    for i in range(n, 0, -1):
        li = history[i - 1]
        above = par[i]
        par[i - 1] = above[: li - 1] + [-1, above[li - 1], 1] + above[li:]

    # Trace lines upwards: label of the line carrying each wave
    slice_line = [[(side, 0, j) for j in range(1, 2 * n + 2)]]
    leaves = {(side, 0, j): frozenset([j]) for j in range(1, 2 * n + 2)}
    lower = {(side, 0, j): ("leaf", j) for j in range(1, 2 * n + 2)}
    upper, offset = {}, {}
    vertex_below, vertex_above = [], []
    for i in range(1, n + 1):
        li = history[i - 1]
        prev = slice_line[i - 1]
        below = prev[li - 1: li + 2]
        for o, lab in enumerate(below):
            upper[lab] = ("vertex", i)
            offset[lab] = o
        new = (side, i, li)
        leaves[new] = frozenset().union(*(leaves[b] for b in below))
        lower[new] = ("vertex", i)
        vertex_below.append(tuple(below))
        vertex_above.append(new)
        slice_line.append(prev[: li - 1] + [new] + prev[li + 2:])
    top = slice_line[n][0]
    upper[top] = ("root",)
    offset[top] = None

    lines = {}
    for lab in leaves:
        i, j = lab[1], lab[2]
        lines[lab] = Line(lab, par[i][j - 1], lower[lab], upper[lab], offset[lab], leaves[lab])
    return InteractionDiagram(n, history, top_parity, side, par, slice_line, lines, vertex_below, vertex_above)


def resonance_modulus(diagram: InteractionDiagram, k_assignment: dict, vertex_index: int) -> int:
    """Omega_i = |k_{l+2}|^2 - |k_l|^2 + s (|k_{l+1}|^2 - |k_out|^2) at v_i.

    ``k_assignment`` maps line labels to integer vectors.
    """
    below = diagram.vertex_below[vertex_index - 1]
    above = diagram.vertex_above[vertex_index - 1]
    try:
        ks = [np.asarray(k_assignment[lab], dtype=np.int64) for lab in below + (above,)]
    except KeyError as exc:
        raise DomainError(f"frequency of line {exc.args[0]} is unassigned") from None
    sq = [int(k @ k) for k in ks]
    s = diagram.vertex_sign(vertex_index)
    return sq[2] - sq[0] + s * (sq[1] - sq[3])


def truncation_pairs(diagram: InteractionDiagram, i: int) -> tuple:
    """The two opposite-parity pairs of lines below v_i removed by the truncated product.

    Offsets (0, 2) and (1, 1 - s), with s the parity leaving v_i.
    """
    below = diagram.vertex_below[i - 1]
    s = diagram.vertex_sign(i)
    return ((below[0], below[2]), (below[1], below[1 - s]))


@dataclass
class KirchhoffSystem:
    """Linear constraints sum_e coeff_e k_e = 0 plus truncation and degeneracy data.

    ``truncations`` lists, per interaction vertex, the two line pairs whose
    vanishing sum is subtracted (factor 1 - delta - delta).  ``forced`` lists line
    pairs whose sum must vanish because of a degeneracy.
    """

    variables: list
    equations: list
    truncations: list
    forced: list = field(default_factory=list)

    def matrix(self) -> np.ndarray:
        idx = {v: i for i, v in enumerate(self.variables)}
        A = np.zeros((len(self.equations), len(self.variables)), dtype=np.int64)
        for r, eq in enumerate(self.equations):
            for v, c in eq.items():
                A[r, idx[v]] += c
        return A

    def solution_dimension(self) -> int:
        """Dimension (per spatial component) of the frequency space satisfying all equations."""
        A = self.matrix().astype(float)
        return len(self.variables) - int(np.linalg.matrix_rank(A))

    def residuals(self, k: dict) -> list:
        return [sum(c * np.asarray(k[v]) for v, c in eq.items()) for eq in self.equations]


@dataclass
class PairedDiagram:
    """Left tree (top +1), right tree (top -1) and a pairing of their 4n+2 initial vertices.

    Initial vertices are numbered 1..2n+1 (left) and 2n+2..4n+2 (right).
    """

    left: InteractionDiagram
    right: InteractionDiagram
    pairs: tuple          # sorted tuple of (a, b) with a < b, global numbering
    index: int = 0

    @property
    def n(self) -> int:
        return self.left.n

    def partner(self) -> dict:
        out = {}
        for a, b in self.pairs:
            out[a], out[b] = b, a
        return out

    def initial_vertex(self, g: int) -> tuple:
        """Global number -> (side, position)."""
        m = 2 * self.n + 1
        return ("L", g) if g <= m else ("R", g - m)

    def global_number(self, side: str, j: int) -> int:
        return j if side == "L" else j + 2 * self.n + 1

    def tree(self, side: str) -> InteractionDiagram:
        return self.left if side == "L" else self.right

    def interaction_lines(self) -> list:
        """All interaction lines, right tree first."""
        return list(self.right.lines.values()) + list(self.left.lines.values())

    def line_leaves_global(self, line: Line) -> frozenset:
        side = line.label[0]
        return frozenset(self.global_number(side, j) for j in line.leaves)

    def kirchhoff_system(self) -> KirchhoffSystem:
        lines = self.interaction_lines()
        variables = [ln.label for ln in lines] + [("U", g) for g in range(1, 4 * self.n + 3)]
        eqs = []
        for tr in (self.left, self.right):
            s = tr.side
            for i in range(1, tr.n + 1):
                eq = {tr.vertex_above[i - 1]: 1}
                for lab in tr.vertex_below[i - 1]:
                    eq[lab] = eq.get(lab, 0) - 1
                eqs.append(eq)
            for j in range(1, 2 * tr.n + 2):
                eqs.append({(s, 0, j): 1, ("U", self.global_number(s, j)): -1})
        for a, b in self.pairs:
            eqs.append({("U", a): 1, ("U", b): 1})
        eqs.append({self.left.slice_line[self.n][0]: 1, self.right.slice_line[self.n][0]: 1})
        truncs = []
        for tr in (self.left, self.right):
            for i in range(1, tr.n + 1):
                truncs.append(((tr.side, i), truncation_pairs(tr, i)))
        forced = []
        for deg in detect_degeneracies(self):
            tr = self.tree(deg.side)
            forced.extend(truncation_pairs(tr, deg.vertex))
        return KirchhoffSystem(variables, eqs, truncs, forced)

    def to_json_dict(self) -> dict:
        def lines_of(tr):
            return [{"label": list(ln.label), "parity": ln.parity, "lower": list(ln.lower),
                     "upper": list(ln.upper), "offset": ln.offset} for ln in tr.lines.values()]

        return {"n": self.n, "left_history": list(self.left.history), "right_history": list(self.right.history),
                "pairs": [list(p) for p in self.pairs], "left_lines": lines_of(self.left),
                "right_lines": lines_of(self.right),
                "degeneracies": [[d.side, d.vertex, sorted(d.offsets)] for d in detect_degeneracies(self)]}


def _perfect_matchings(plus: list, minus: list):
    if not plus:
        yield ()
        return
    a = plus[0]
    for i, b in enumerate(minus):
        for rest in _perfect_matchings(plus[1:], minus[:i] + minus[i + 1:]):
            yield ((a, b),) + rest


def enumerate_pairings(left: InteractionDiagram, right: InteractionDiagram) -> list:
    """All pairings matching each +1 initial vertex with a -1 initial vertex."""
    if left.n != right.n:
        raise DomainError("trees must have the same order")
    if left.top_parity != 1 or right.top_parity != -1:
        raise DomainError("left tree needs top parity +1 and right tree -1")
    m = 2 * left.n + 1
    par = left.initial_parities + right.initial_parities
    plus = [g for g in range(1, 2 * m + 1) if par[g - 1] == 1]
    minus = [g for g in range(1, 2 * m + 1) if par[g - 1] == -1]
    out = []
    for idx, mt in enumerate(_perfect_matchings(plus, minus)):
        pairs = tuple(sorted(tuple(sorted(p)) for p in mt))
        out.append(PairedDiagram(left, right, pairs, idx))
    return out


def parity_classes(left: InteractionDiagram, right: InteractionDiagram) -> tuple:
    """Names of the +1 and -1 initial vertices, e.g. (['L2','L3','R3'], ['L1','R1','R2'])."""
    plus, minus = [], []
    for tr, tag in ((left, "L"), (right, "R")):
        for j, s in enumerate(tr.initial_parities, start=1):
            (plus if s == 1 else minus).append(f"{tag}{j}")
    return plus, minus


@dataclass(frozen=True)
class Degeneracy:
    side: str
    vertex: int
    offsets: frozenset    # {j, k} subset of {0, 1, 2}


def detect_degeneracies(paired: PairedDiagram) -> list:
    """All (i, {j,k}) with opposite parities whose initial vertices are paired among themselves."""
    partner = paired.partner()
    out = []
    for tr in (paired.right, paired.left):
        for i in range(1, tr.n + 1):
            below = tr.vertex_below[i - 1]
            for j, k in ((0, 1), (0, 2), (1, 2)):
                lj, lk = tr.lines[below[j]], tr.lines[below[k]]
                if lj.parity * lk.parity != -1:
                    continue
                union = paired.line_leaves_global(lj) | paired.line_leaves_global(lk)
                if all(partner[g] in union for g in union):
                    out.append(Degeneracy(tr.side, i, frozenset((j, k))))
    return out


def all_paired_diagrams(n: int, max_order: int = DEFAULT_MAX_ORDER) -> list:
    """Every (left history, right history, pairing) at order n."""
    hs = enumerate_histories(n, max_order)
    out = []
    for hl in hs:
        left = build_diagram(n, hl, 1, "L")
        for hr in hs:
            right = build_diagram(n, hr, -1, "R")
            out.extend(enumerate_pairings(left, right))
    return out


def diagram_counts(n: int, max_order: int = DEFAULT_MAX_ORDER) -> dict:
    """Histories (2n-1)!! per tree and (2n+1)! pairings per history pair."""
    if n < 1:
        raise DomainError("order n must be at least 1")
    if n > max_order:
        raise ResourceError(f"order n={n} exceeds the enumeration cap {max_order}")
    hs = double_factorial_odd(n)
    npair = factorial(2 * n + 1)
    return {"n": n, "histories": hs, "pairings_per_history_pair": npair, "paired_diagrams": hs**2 * npair}


MAX_JSON_DIAGRAMS = 200_000


def diagrams_json(n: int) -> str:
    total = diagram_counts(n)["paired_diagrams"]
    if total > MAX_JSON_DIAGRAMS:
        raise ResourceError(f"{total} paired diagrams at n={n} exceed the listing cap {MAX_JSON_DIAGRAMS}")
    return json.dumps([p.to_json_dict() for p in all_paired_diagrams(n)], indent=1)
