"""
The two Neumann conditions
==========================

The limit equation carries a classical condition, ∂_ν U = 0 on the wall, and a
nonlocal one outside the niche: ∫_Ω (U(x) − U(y)) |x − y|^{-n-2s} dy = 0. The
solver imposes both. Here we measure how well each holds for a solver field.
"""

import numpy as np

from niche import EffectiveCoefficients, Interval, ProcessParams, extend_exterior, make_operator, solve
from niche.validation import check_neumann_local, check_neumann_nonlocal, exterior_probe_cells, nonlocal_residuals

niche = Interval(0.0, 1.0)
params = ProcessParams(s=0.25, p=0.2, h=0.01)
coeffs = EffectiveCoefficients.from_params(params, 1)
init = lambda x: np.cos(np.pi * x) + 1

# %%
# The exterior values are weighted averages of the inside. For u(y) = y at x = 2
# and s = 1/2 the average is 2(1 − ln 2).
print("extension of y at x=2:", extend_exterior(lambda y: y, 2.0, domain=niche, s=0.5), 2 * (1 - np.log(2)))

# %%
# Nonlocal condition, at exterior cells spread through the band.
coarse = solve(make_operator(niche, 1 / 128, params.s), coeffs, init, [0.1])[0]
probes = exterior_probe_cells(coarse, niche, 20)
print(check_neumann_nonlocal(coarse, niche, params.s, probes).as_dict())

# %%
# Disturb one exterior value and the residual moves by that amount times the
# kernel mass of the niche seen from there.
bumped = coarse.copy()
bumped.values[coarse.lattice.index_of(probes[0])] += 1e-3
print("after a 1e-3 bump:", nonlocal_residuals(bumped, niche, params.s, probes[:1]))

# %%
# Classical condition: the one-sided difference at the wall is first order in
# dx, so it halves under refinement.
fine = solve(make_operator(niche, 1 / 256, params.s), coeffs, init, [0.1])[0]
r = check_neumann_local(coarse, niche, refined=fine)
print(f"boundary slope {r.details['coarse']:.4f} -> {r.details['fine']:.4f}, ratio {r.computed:.3f}")
