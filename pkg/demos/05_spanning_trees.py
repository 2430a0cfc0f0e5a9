"""Paired diagrams, spanning trees and vertex degrees at order two."""
from collections import Counter

from kwelab.diagrams import all_paired_diagrams, detect_degeneracies, diagram_counts
from kwelab.spanning import build_spanning_tree, classify_degrees, exhaustive_check

for n in (1, 2, 3):
    print(n, diagram_counts(n))
ps = all_paired_diagrams(2)
p = ps[17]
tree = build_spanning_tree(p)
print("pairing", p.pairs)
print("free edges (time order):", tree.free_edges)
print("degrees (right tree first):", classify_degrees(tree).degrees)
print("degeneracies:", detect_degeneracies(p))
print("degree profiles at n=2:", Counter((d.n0, d.n1, d.n2) for d in (classify_degrees(build_spanning_tree(q))
                                                                      for q in ps)))
rep = exhaustive_check(3)
print(f"n=3: {rep.configurations} configurations, spanning ok {rep.spanning_ok}, counting ok {rep.counting_ok}")
