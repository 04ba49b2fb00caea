"""
Two ways of moving near a wall
==============================

A particle in the niche (0, 1) either walks, landing uniformly in a ball of
radius h^s, or jumps with a power-law step longer than h. Whatever leaves the
niche comes straight back. Here we look at the one-step densities of a particle
that starts next to the right wall and check that nothing is lost.
"""

from scipy import integrate

from niche import Interval, ProcessParams, jump_density, walk_density
from niche.validation import jump_mass, walk_mass

niche = Interval(0.0, 1.0)
params = ProcessParams(s=0.5, p=0.5, h=0.01)
print(f"walk radius h^s = {params.walk_radius:g}, time step h^2s = {params.tau:g}")

# %%
# Far from the wall the walk density is flat, 1/|B| = 5 on (x - 0.1, x + 0.1).
# Close to the wall, mass that walked out comes back and piles up near it.
x = 0.95
for y in (0.88, 0.92, 0.96, 0.99):
    print(f"P_W({x} -> {y}) = {walk_density(params, niche, x, y):.4f}")

# %%
# The jump density has a hole of radius h around the start and a power-law
# tail; the reflected part adds mass near the wall the particle jumped through.
for y in (0.5, 0.9, 0.99):
    direct = jump_density(params, niche, x, y, reflected=False)
    total = jump_density(params, niche, x, y)
    print(f"P_J({x} -> {y}) = {total:.4f}  (direct part {direct:.4f})")

# %%
# Both kernels are probability densities in y, for every start point ...
for x in (0.5, 0.95, 0.999):
    print(f"x={x}: walk mass {walk_mass(params, niche, x):.12f}, jump mass {jump_mass(params, niche, x):.12f}")

# %%
# ... and symmetric, which is what makes the uniform law invariant.
a, b = 0.93, 0.97
print("symmetry gap:", abs(jump_density(params, niche, a, b) - jump_density(params, niche, b, a)))

# %%
# A plain quadrature check of one mass, without the package's graded rules.
f = lambda y: walk_density(params, niche, 0.95, y)
print("quad:", integrate.quad(f, 0.85, 1.0, points=[0.9, 0.95], limit=200)[0])
