"""Counting lattice points near a resonance and the fitted eps exponents."""
from kwelab.lattice import counting_exponents

r = counting_exponents()
for e, a, b in zip(r["eps"], r["one"], r["two"]):
    print(f"eps=1/{round(1 / e):3d}: degree-one count {a:6d}   degree-two count {b:9d}")
print(f"fitted exponents: degree one {r['exponent_one']:.3f} (expected about -1), "
      f"degree two {r['exponent_two']:.3f} (expected about -2)")
