from math import factorial

import numpy as np
import pytest

from kwelab.diagrams import (all_paired_diagrams, build_diagram, detect_degeneracies, diagram_counts, diagrams_json,
                             enumerate_histories, enumerate_pairings, parity_classes, resonance_modulus)
from kwelab.errors import DomainError, ResourceError


def test_history_counts():
    assert enumerate_histories(1) == [(1,)]
    assert len(enumerate_histories(2)) == 3
    assert len(enumerate_histories(3)) == 15
    assert len(enumerate_histories(4)) == 105


def test_bottom_parities_order_one():
    assert build_diagram(1, (1,), 1).initial_parities == [-1, 1, 1]
    assert build_diagram(1, (1,), -1).initial_parities == [-1, -1, 1]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_slice_structure(n):
    for h in enumerate_histories(n):
        tr = build_diagram(n, h, 1)
        for i in range(n + 1):
            assert len(tr.parities[i]) == 1 + 2 * (n - i)
        for i in range(1, n + 1):
            li = h[i - 1]
            below, above = tr.parities[i - 1], tr.parities[i]
            assert below[li - 1] == -1 and below[li + 1] == 1
            assert below[li] == above[li - 1]
        assert len(tr.initial_parities) == 2 * n + 1


def test_pairings_order_one():
    left, right = build_diagram(1, (1,), 1, "L"), build_diagram(1, (1,), -1, "R")
    plus, minus = parity_classes(left, right)
    # the right tree's bottom parities are (-1, -1, +1), which fixes its +1 vertex as R3
    assert plus == ["L2", "L3", "R3"] and minus == ["L1", "R1", "R2"]
    ps = enumerate_pairings(left, right)
    assert len(ps) == 6
    par = left.initial_parities + right.initial_parities
    for p in ps:
        assert all(par[a - 1] * par[b - 1] == -1 for a, b in p.pairs)


@pytest.mark.parametrize("n", [1, 2])
def test_pairing_count_formula_matches_enumeration(n):
    hs = enumerate_histories(n)
    for hl in hs:
        for hr in hs:
            ps = enumerate_pairings(build_diagram(n, hl, 1, "L"), build_diagram(n, hr, -1, "R"))
            assert len(ps) == factorial(2 * n + 1)
    c = diagram_counts(n)
    assert len(all_paired_diagrams(n)) == c["paired_diagrams"]


def test_pairing_count_order_three_one_history_pair():
    ps = enumerate_pairings(build_diagram(3, (1, 1, 1), 1, "L"), build_diagram(3, (5, 3, 1), -1, "R"))
    assert len(ps) == 5040


def test_degeneracy_examples():
    left, right = build_diagram(1, (1,), 1, "L"), build_diagram(1, (1,), -1, "R")
    ps = enumerate_pairings(left, right)
    inner = [p for p in ps if (1, 2) in p.pairs]
    assert inner and all(any(d.side == "L" and d.vertex == 1 for d in detect_degeneracies(p)) for p in inner)
    cross = [p for p in ps if all((a <= 3) != (b <= 3) for a, b in p.pairs)]
    assert cross and all(not detect_degeneracies(p) for p in cross)


def test_degeneracy_adds_forced_constraint():
    left, right = build_diagram(1, (1,), 1, "L"), build_diagram(1, (1,), -1, "R")
    p = next(p for p in enumerate_pairings(left, right) if (1, 2) in p.pairs)
    ks = p.kirchhoff_system()
    assert ks.forced
    below = left.vertex_below[0]
    assert (below[0], below[2]) in ks.forced


def test_resonance_modulus():
    tr = build_diagram(1, (1,), 1)
    below, above = tr.vertex_below[0], tr.vertex_above[0]
    same = {lab: (2, 1) for lab in below + (above,)}
    assert resonance_modulus(tr, same, 1) == 0
    cancel = dict(zip(below + (above,), [(3, 1), (-3, -1), (0, 0), (0, 0)]))
    assert resonance_modulus(tr, cancel, 1) == 0
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = rng.integers(-5, 6, size=(4, 2))
        s = tr.vertex_sign(1)
        expect = k[2] @ k[2] - k[0] @ k[0] + s * (k[1] @ k[1] - k[3] @ k[3])
        assert resonance_modulus(tr, dict(zip(below + (above,), k)), 1) == expect


def test_kirchhoff_dimension():
    for p in all_paired_diagrams(1):
        ks = p.kirchhoff_system()
        assert ks.solution_dimension() == 2 * 1 + 1


def test_errors_and_caps():
    with pytest.raises(DomainError):
        build_diagram(2, (4, 1), 1)
    with pytest.raises(DomainError):
        build_diagram(1, (1,), 0)
    with pytest.raises(ResourceError):
        diagram_counts(9)
    with pytest.raises(ResourceError):
        diagrams_json(4)
    assert diagram_counts(3)["paired_diagrams"] == 15**2 * 5040
