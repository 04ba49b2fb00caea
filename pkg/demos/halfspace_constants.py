"""
Constants of the expansion
==========================

The walk contributes through c_o = ∫_{B_1} |ω|² dω. Near a flat wall, the
re-entry of walkers leaves a boundary term whose strength is the halfspace
constant c_⋆. In 1D it is 3/4 in closed form; in 2D we estimate it by Monte
Carlo and compare with a one-dimensional quadrature, and we check that its
tangential part vanishes by odd symmetry.
"""

import math

from niche.validation import compute_c_o, compute_c_star

for n, ref in ((1, 2 / 3), (2, math.pi / 2), (3, 4 * math.pi / 5)):
    closed, quad = compute_c_o(n)
    print(f"c_o({n}) = {closed:.15f}  quadrature {quad:.15f}  expected {ref:.15f}")

one = compute_c_star(1)
print(f"c_star(1) = {one.c_star}, a_0 = {one.a_0}, b_0 = {one.b_0}, varpi = {one.varpi}")

two = compute_c_star(2, samples=2_000_000, seed=0)
print(f"c_star(2) = {two.c_star:.5f} ± {two.c_star_se:.1e} (quadrature {two.c_star_quadrature:.7f})")
print(f"vector part: tangential {two.vector[0]:+.2e} ± {two.vector_se[0]:.1e}, "
      f"normal {two.vector[1]:+.4f} ± {two.vector_se[1]:.1e}")
