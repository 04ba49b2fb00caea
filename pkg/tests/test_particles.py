import numpy as np
import pytest

from niche.geometry import Disk, Interval
from niche.kernels import ProcessParams
from niche.particles import (
    ParticleEnsemble,
    SimConfig,
    estimate_density,
    make_histogram_grid,
    make_phantom,
    run_ensemble,
    run_phantom_process,
)

I = Interval(0, 1)
P = ProcessParams(0.5, 0.5, 0.01)


def test_config_preconditions():
    with pytest.raises(ValueError):
        SimConfig(P, I, 0, 0.1, "point", 0.5)
    with pytest.raises(ValueError):
        SimConfig(P, I, 10, -1.0, "point", 0.5)
    with pytest.raises(ValueError):
        SimConfig(P, I, 10, 0.1, "point", 1.5)
    with pytest.raises(ValueError):
        SimConfig(P, I, 10, 0.1, "point", 0.5, snapshots=[0.2])
    with pytest.raises(ValueError):
        SimConfig(P, I, 10, 0.1, "tabulated")


def test_snapshot_times_round_down_to_tau():
    cfg = SimConfig(P, I, 10, 0.1, "point", 0.5, snapshots=[0.0, 0.035, 0.1])
    assert [cfg.steps_for(t) for t in cfg.snapshot_times] == [0, 3, 10]


def test_histogram_grid_volumes():
    g = make_histogram_grid(Interval(0, 1.03), 0.1)
    assert len(g.cells) == 11 and g.volumes[-1] == pytest.approx(0.03)
    d = make_histogram_grid(Disk((0, 0), 1), 0.1)
    assert d.volumes.sum() == pytest.approx(np.pi, rel=1e-3)


def test_estimate_density_examples():
    grid = make_histogram_grid(I, 0.5)
    est = estimate_density(ParticleEnsemble(np.full(7, 0.2)), grid)
    assert np.allclose(est.density, [2.0, 0.0])
    est = estimate_density(ParticleEnsemble(np.array([0.1, 0.2, 0.6, 0.9])), grid)
    assert est.density[0] == est.density[1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        estimate_density(ParticleEnsemble(np.zeros(0)), grid)


def test_zero_time_gives_initial_law():
    h = run_ensemble(SimConfig(P, I, 1000, 0.0, "point", 0.35, dx=0.1))[0]
    assert h.step == 0 and h.counts[3] == 1000 and h.total == 1000


def test_uniform_law_is_invariant():
    N = 100_000
    h = run_ensemble(SimConfig(P, I, N, 0.05, "uniform", dx=0.05, seed=11))[0]
    q = 1 / 20
    sigma = np.sqrt(N * q * (1 - q))
    assert h.step == 5
    assert np.all(np.abs(h.counts - N * q) < 4 * sigma)


def test_results_independent_of_worker_count():
    base = dict(params=P, domain=I, N=300_000, T=0.03, initial="point", x0=0.9, seed=5, dx=1 / 32)
    a = run_ensemble(SimConfig(**base, workers=1))[0]
    b = run_ensemble(SimConfig(**base, workers=3))[0]
    assert np.array_equal(a.counts, b.counts)


def test_brownian_variance():
    Q = ProcessParams(0.5, 0.0, 1e-3)
    h, ens = run_ensemble(SimConfig(Q, I, 100_000, 0.1, "point", 0.5, seed=2, dx=1 / 64), return_positions=True)
    assert ens.step_count == 100
    assert np.var(ens.positions[:, 0]) == pytest.approx(2 * (1 / 6) * 0.1, rel=0.02)


def test_phantom_constant_is_stationary():
    Q = ProcessParams(0.5, 0.5, 1e-2)
    cfg = SimConfig(Q, I, 1, 0.05, "uniform", dx=1 / 64)
    f = run_phantom_process(cfg)[0]
    assert f.meta["steps"] == 5
    assert np.max(np.abs(f.values - 1.0)) < 1e-6  # interior and exterior band
    assert f.mass == pytest.approx(1.0, rel=1e-9)


def test_phantom_rejects_coarse_grid():
    with pytest.raises(ValueError):
        make_phantom(I, ProcessParams(0.5, 0.5, 1e-4), dx=1 / 64)
