import math

import numpy as np
import pytest
from scipy import integrate, stats

from niche.geometry import Interval, Rectangle
from niche.kernels import (
    EffectiveCoefficients,
    ProcessParams,
    combined_density,
    jump_density,
    jump_reentry,
    jump_reentry_weight,
    pi_measure_density,
    sample_jump_step,
    sample_power_law_radius,
    sample_walk_step,
    walk_density,
)
from niche.particles import step_particle
from niche.rng import CounterRNG, GeneratorBatch

I = Interval(0, 1)


class FixedBatch(GeneratorBatch):
    """Stream batch stub returning the same uniforms for every slot."""

    def __init__(self, rows):
        self.rows = np.atleast_2d(np.asarray(rows, float))

    def __len__(self):
        return len(self.rows)

    def uniform(self, slot):
        return self.rows.copy()

    def subset(self, mask):
        return FixedBatch(self.rows[mask])


def test_params_validation_and_scaling():
    P = ProcessParams(0.5, 0.3, 0.01)
    assert P.tau == pytest.approx(0.01)
    assert P.walk_radius == pytest.approx(0.1)
    assert P.lam == pytest.approx(10.0) and P.lam_is_integer
    for bad in [(0.0, 0.5, 0.1), (1.0, 0.5, 0.1), (0.5, -0.1, 0.1), (0.5, 1.1, 0.1), (0.5, 0.5, 1.0)]:
        with pytest.raises(ValueError):
            ProcessParams(*bad)


def test_effective_coefficients():
    c = EffectiveCoefficients.from_params(ProcessParams(0.5, 0.0, 0.01), 1)
    assert c.alpha == pytest.approx(1 / 6) and c.beta == 0.0 and c.c_o == pytest.approx(2 / 3)
    c = EffectiveCoefficients.from_params(ProcessParams(0.5, 1.0, 0.01), 1)
    assert c.alpha == 0.0 and c.beta == pytest.approx(0.5)
    c = EffectiveCoefficients.from_params(ProcessParams(0.25, 0.5, 0.01), 2)
    assert c.c_o == pytest.approx(math.pi / 2)
    assert c.alpha == pytest.approx(0.5 * (math.pi / 2) / (4 * math.pi))
    assert c.beta == pytest.approx(2 * 0.25 * 0.5 / (2 * math.pi))


def test_walk_density_values():
    P = ProcessParams(0.5, 0.5, 0.01)  # walk radius 0.1
    assert walk_density(P, I, 0.5, 0.55) == pytest.approx(5.0)
    assert walk_density(P, I, 0.5, 0.8) == 0.0
    assert walk_density(P, I, 0.95, 0.97) > 5.0  # reflected mass near the wall


def test_walk_density_normalised_near_boundary():
    P = ProcessParams(0.5, 0.5, 0.01)
    f = lambda y: walk_density(P, I, 0.95, y)
    total = sum(integrate.quad(f, a, b, limit=200, points=pts)[0]
                for a, b, pts in [(0.85, 0.9, None), (0.9, 1.0, [0.95])])
    assert total == pytest.approx(1.0, abs=1e-8)


def test_reentry_weight():
    P = ProcessParams(0.5, 1.0, 0.01)
    assert jump_reentry_weight(P, I, 1.05) == pytest.approx(0.01 * (1 / 0.05 - 1 / 1.05), rel=1e-10)
    assert jump_reentry_weight(P, I, 1e8) < 1e-9


def test_jump_density_direct_term_and_symmetry():
    P = ProcessParams(0.5, 1.0, 0.01)
    assert jump_density(P, I, 0.3, 0.2, reflected=False) == pytest.approx(0.5)
    assert jump_density(P, I, 0.3, 0.305, reflected=False) == 0.0
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)
    assert np.max(np.abs(jump_density(P, I, x, y) - jump_density(P, I, y, x))) < 1e-10


def test_combined_density_degenerate_mixtures():
    x, y = 0.2, 0.25
    P0, P1 = ProcessParams(0.5, 0.0, 0.01), ProcessParams(0.5, 1.0, 0.01)
    assert combined_density(P0, I, x, y) == pytest.approx(walk_density(P0, I, x, y))
    assert combined_density(P1, I, x, y) == pytest.approx(jump_density(P1, I, x, y))


def test_pi_measure_density_values():
    P = ProcessParams(0.5, 0.5, 0.01)
    assert pi_measure_density(P, 0.0, 0.1, kind="walk") == 0.0  # |x-y| = walk radius
    assert pi_measure_density(P, 0.0, 0.05, kind="walk") == pytest.approx(5.0)
    assert pi_measure_density(P, 0.0, 0.1, kind="jump") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        pi_measure_density(P, 0.0, 0.1, kind="other")


def test_power_law_radius_inverse_cdf():
    assert sample_power_law_radius(0.01, 0.5, u=0.0) == pytest.approx(0.01)
    assert sample_power_law_radius(0.01, 0.5, u=0.75) == pytest.approx(0.04)
    r = sample_power_law_radius(0.01, 0.3, rng=np.random.default_rng(0), size=100_000)
    assert r.min() >= 0.01
    assert stats.kstest(r, lambda q: 1 - (0.01 / q) ** 0.6).statistic < 0.01


def test_direct_jump_branch_arithmetic():
    P = ProcessParams(0.5, 1.0, 0.01)
    # u0 = 0.95 -> rho = h / (1 - u0) = 0.2; u1 >= 0.5 -> positive direction
    y = sample_jump_step(P, I, np.array([0.3]), FixedBatch([[0.95, 0.75]]))
    assert y[0] == pytest.approx(0.5)


def test_walk_step_support_and_variance():
    P = ProcessParams(0.5, 0.0, 0.01)
    m = 200_000
    y = sample_walk_step(P, I, np.full(m, 0.5), CounterRNG(2).batch(np.arange(m), 0))
    assert np.all(np.abs(y - 0.5) < 0.1)
    assert np.var(y - 0.5) == pytest.approx(P.tau / 3, rel=0.02)
    y = sample_walk_step(P, I, np.full(m, 0.98), CounterRNG(2).batch(np.arange(m), 0))
    assert np.all((y > 0) & (y < 1))


def test_jump_reentry_lands_inside_and_away_from_exit():
    P = ProcessParams(0.5, 1.0, 0.01)
    z = np.full(10_000, 1.005)
    y = jump_reentry(P, I, z, CounterRNG(0).batch(np.arange(10_000), 0))
    assert np.all((y > 0) & (y < 1)) and np.all(np.abs(y - 1.005) >= 0.01)


def test_jump_step_2d_stays_inside():
    R = Rectangle((0, 0), (1, 1))
    P = ProcessParams(0.5, 1.0, 0.01)
    m = 20_000
    x = np.tile([0.99, 0.5], (m, 1))
    y = sample_jump_step(P, R, x, CounterRNG(4).batch(np.arange(m), 0))
    assert np.all(R.contains(y))


def test_branch_selection_degenerate_p():
    m = 5000
    x = np.full(m, 0.5)
    batch = CounterRNG(9).batch(np.arange(m), 0)
    walk_only = step_particle(x, ProcessParams(0.5, 0.0, 0.01), I, batch)
    assert np.all(np.abs(walk_only - 0.5) < 0.1)
    jump_only = step_particle(x, ProcessParams(0.5, 1.0, 0.01), I, batch)
    assert np.mean(np.abs(jump_only - 0.5) >= 0.1) > 0.05  # beyond the walk radius
