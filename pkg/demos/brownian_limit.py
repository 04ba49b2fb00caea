"""
The Brownian limit
==================

With p = 0 nobody jumps and the density follows the heat equation
∂_t U = α ΔU with α = 1/6 in one dimension, with a reflecting wall. We check
that against the cosine mode, which decays like exp(-α π² t), and against the
spread of a particle cloud.
"""

import time

import numpy as np

from niche import EffectiveCoefficients, Interval, ProcessParams, SimConfig, make_operator, run_ensemble, solve

niche = Interval(0.0, 1.0)
params = ProcessParams(s=0.5, p=0.0, h=1e-3)
coeffs = EffectiveCoefficients.from_params(params, 1)
print(f"alpha = {coeffs.alpha:.6f}, beta = {coeffs.beta}")

# %%
# Finite volumes on a 1/256 grid; the time step is chosen by the solver.
op = make_operator(niche, 1 / 256, params.s)
t0 = time.perf_counter()
snaps = solve(op, coeffs, lambda x: np.cos(np.pi * x) + 1, [0.1, 0.5])
x = op.lattice.centers()[op.interior][:, 0]
for f in snaps:
    t = f.meta["time"]
    exact = np.exp(-coeffs.alpha * np.pi**2 * t) * np.cos(np.pi * x) + 1
    err = np.linalg.norm(f.interior_values() - exact) / np.linalg.norm(exact)
    print(f"t={t}: {f.meta['steps']} steps, relative L2 error {err:.2e}, mass {f.mass:.12f}")
print(f"solve took {time.perf_counter() - t0:.1f} s")

# %%
# A cloud released at the centre spreads with variance 2αt until it feels the walls.
cfg = SimConfig(params, niche, N=200_000, T=0.05, initial="point", x0=0.5, seed=1, snapshots=[0.01, 0.05])
hists, ens = run_ensemble(cfg, return_positions=True)
print(f"t={ens.time:g}: sample variance {ens.positions.var():.5f}, 2*alpha*t = {2 * coeffs.alpha * ens.time:.5f}")
