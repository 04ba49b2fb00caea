"""
Particles, the PDE and the phantom population
=============================================

The same mixed process (s = p = 0.5) seen three ways: a particle ensemble, the
limiting equation ∂_t U = αΔU − β(−Δ)^s U with both Neumann conditions, and the
density-level "phantom" iteration that tracks the law exactly in time steps of
h^{2s}. All three start from a unit mass at the centre of the niche.
"""

from niche import (
    EffectiveCoefficients,
    Interval,
    ProcessParams,
    SimConfig,
    make_operator,
    point_mass,
    run_ensemble,
    run_phantom_process,
    solve,
)
from niche.validation import compare_particle_pde, exterior_probe_cells, phantom_extension_residual

niche = Interval(0.0, 1.0)
params = ProcessParams(s=0.5, p=0.5, h=1e-3)
coeffs = EffectiveCoefficients.from_params(params, 1)
dx = 1 / 128

# %%
# Particles: snapshot times are rounded down to whole steps of h^{2s}.
cfg = SimConfig(params, niche, N=200_000, T=0.1, initial="point", x0=0.5, seed=2, dx=dx, snapshots=[0.02, 0.1])
hists = run_ensemble(cfg)

# %%
# The PDE, solved to exactly the times the particles reached.
op = make_operator(niche, dx, params.s)
fields = solve(op, coeffs, point_mass(op, 0.5), [h.time for h in hists])

# %%
# The phantom iteration on the same lattice.
phantom = run_phantom_process(cfg)

for h, f, v in zip(hists, fields, phantom):
    print(f"t={h.time:g}: L1(particles, PDE) = {compare_particle_pde(h, f):.4f}, "
          f"L1(particles, phantom) = {compare_particle_pde(h, v):.4f}, phantom mass {v.mass:.4f}")

# %%
# Outside the niche the phantom field is the kernel-weighted average of its
# values inside, which is the nonlocal Neumann condition in disguise.
probes = exterior_probe_cells(phantom[-1], niche, 10)
print("extension identity residual:", phantom_extension_residual(phantom[-1], niche, params.s, probes))

# %%
# Centre and edge of the profiles at the last snapshot.
h, f = hists[-1], fields[-1]
for i in (0, 32, 64, 127):
    print(f"x={h.centers[i, 0]:.4f}  particles {h.density[i]:7.4f}  PDE {f.interior_values()[i]:7.4f}")
