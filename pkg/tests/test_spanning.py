import numpy as np
import pytest

from kwelab.diagrams import all_paired_diagrams, detect_degeneracies
from kwelab.spanning import build_spanning_tree, classify_degrees, exhaustive_check


@pytest.mark.parametrize("n", [1, 2])
def test_spanning_tree_properties_python_side(n):
    rng = np.random.default_rng(n)
    for p in all_paired_diagrams(n):
        tr = build_spanning_tree(p)
        assert len(tr.free_edges) == 2 * n + 1
        assert set(np.unique(tr.coeffs)) <= {-1, 0, 1}
        free = rng.integers(-9, 10, size=(2 * n + 1, 2))
        k = tr.reconstruct(free)
        for r in p.kirchhoff_system().residuals(k):
            assert not np.any(r)
        # time ordering: a free edge never enters edges later in time than itself
        keys = tr.time_keys()
        lines = tr.coeffs[:len(keys)]
        for i, e in enumerate(tr.free_index):
            later = keys > keys[e]
            assert not np.any(lines[later, i])


@pytest.mark.parametrize("n", [1, 2])
def test_degree_identities(n):
    for p in all_paired_diagrams(n):
        prof = classify_degrees(build_spanning_tree(p))
        assert prof.n0 + prof.n1 + prof.n2 == 2 * n
        assert prof.n1 + 2 * prof.n2 == 2 * n
        first = prof.degrees[0]
        assert first in (0, 1)
        if first == 1:
            assert any(d.side == "R" and d.vertex == 1 for d in detect_degeneracies(p))


def test_degree_one_and_two_structure():
    """Free edges enter the integrated edges below their vertex with coefficient -1 (or 0)."""
    for p in all_paired_diagrams(2):
        tr = build_spanning_tree(p)
        t = tr.template
        col = {int(e): i for i, e in enumerate(tr.free_index)}
        for v in range(2 * t.n):
            below = [int(e) for e in t.below[v]]
            free = [e for e in below if e in col]
            integrated = [e for e in below if e not in col]
            if len(free) == 1:
                got = sorted(int(tr.coeffs[e, col[free[0]]]) for e in integrated)
                assert got == [-1, 0]
            elif len(free) == 2:
                assert [int(tr.coeffs[integrated[0], col[f]]) for f in free] == [-1, -1]


@pytest.mark.parametrize("n", [1, 2])
def test_exhaustive_compiled_check(n):
    rep = exhaustive_check(n)
    assert rep.spanning_ok and rep.counting_ok
    assert rep.configurations == len(all_paired_diagrams(n))
