import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from niche.geometry import (
    Disk,
    GeometryError,
    Halfspace,
    Interval,
    Rectangle,
    ball_intersection_volume,
    contains,
    outward_normal,
    sample_uniform_in_intersection,
    unit_ball_volume,
    unit_sphere_area,
)
from niche.rng import CounterRNG


def test_unit_ball_constants():
    assert unit_ball_volume(1) == pytest.approx(2.0)
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert unit_sphere_area(1) == pytest.approx(2.0)
    assert unit_sphere_area(2) == pytest.approx(2 * math.pi)
    assert unit_sphere_area(3) == pytest.approx(4 * math.pi)


def test_open_domain_membership():
    I = Interval(0, 1)
    assert contains(I, 0.5) and not contains(I, 0.0) and not contains(I, 1.0)
    R = Rectangle((0, 0), (2, 1))
    assert list(contains(R, [[1, 0.5], [2, 0.5], [1, 1.0]])) == [True, False, False]
    D = Disk((0, 0), 1)
    assert contains(D, [0.5, 0.5]) and not contains(D, [1.0, 0.0])


def test_outward_normals():
    assert np.allclose(outward_normal(Interval(0, 1), 1.0), [1.0])
    assert np.allclose(outward_normal(Interval(0, 1), 0.0), [-1.0])
    assert np.allclose(outward_normal(Rectangle((0, 0), (1, 1)), [0.5, 1.0]), [0, 1])
    assert np.allclose(outward_normal(Disk((1, 1), 2), [1, 3]), [0, 1])
    with pytest.raises(GeometryError):
        outward_normal(Interval(0, 1), 0.5)


@given(st.floats(0, 2 * math.pi))
def test_disk_normal_is_radial(theta):
    D = Disk((0.3, -0.2), 1.5)
    x = np.array([0.3, -0.2]) + 1.5 * np.array([math.cos(theta), math.sin(theta)])
    nu = outward_normal(D, x)
    assert np.linalg.norm(nu) == pytest.approx(1.0)
    assert nu @ np.array([math.cos(theta), math.sin(theta)]) == pytest.approx(1.0)


def test_ball_volume_interval():
    I = Interval(0, 1)
    assert ball_intersection_volume(I, 0.5, 0.1) == pytest.approx(0.2)
    assert ball_intersection_volume(I, 0.05, 0.1) == pytest.approx(0.15)
    assert ball_intersection_volume(I, 1.5, 0.2) == 0.0


def test_ball_volume_halfspace_is_half_at_boundary():
    H = Halfspace((0.0, 1.0))
    assert ball_intersection_volume(H, [0.0, 0.0], 2.0) == pytest.approx(2 * math.pi)
    assert ball_intersection_volume(H, [0.0, -3.0], 1.0) == pytest.approx(math.pi)


@pytest.mark.parametrize(
    "domain,center,r",
    [
        (Rectangle((0, 0), (1, 1)), [0.05, 0.02], 0.1),
        (Rectangle((0, 0), (1, 0.5)), [0.5, 0.25], 0.4),
        (Disk((0, 0), 1), [0.95, 0.0], 0.2),
        (Disk((0, 0), 1), [0.0, 0.0], 2.0),
    ],
)
def test_ball_volume_matches_monte_carlo(domain, center, r):
    rng = np.random.default_rng(0)
    m = 400_000
    ang = rng.uniform(0, 2 * math.pi, m)
    rad = r * np.sqrt(rng.uniform(0, 1, m))
    pts = np.asarray(center) + np.c_[rad * np.cos(ang), rad * np.sin(ang)]
    frac = domain.contains(pts).mean()
    est = frac * math.pi * r * r
    se = math.pi * r * r * math.sqrt(frac * (1 - frac) / m)
    assert abs(ball_intersection_volume(domain, center, r) - est) < 5 * se + 1e-12


def test_ball_volume_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        ball_intersection_volume(Interval(0, 1), 0.5, 0.0)


def test_uniform_sampler_chi_square_2d():
    D = Disk((0, 0), 1)
    c = np.array([0.9, 0.1])
    r = 0.3
    m = 200_000
    pts = sample_uniform_in_intersection(D, np.tile(c, (m, 1)), r, CounterRNG(5).batch(np.arange(m), 0))
    assert np.all(D.contains(pts)) and np.all(np.linalg.norm(pts - c, axis=1) < r)
    # uniform law => counts in angular sectors around c proportional to sector areas
    edges = np.linspace(-math.pi, math.pi, 21)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    counts, _ = np.histogram(ang, edges)
    rng = np.random.default_rng(1)
    big = 4_000_000
    a = rng.uniform(-math.pi, math.pi, big)
    rr = r * np.sqrt(rng.uniform(0, 1, big))
    q = c + np.c_[rr * np.cos(a), rr * np.sin(a)]
    keep = D.contains(q)
    ref, _ = np.histogram(a[keep], edges)
    expected = ref / ref.sum() * m
    _, pval = stats.chisquare(counts, expected)
    assert pval > 1e-3


def test_uniform_sampler_interval_is_uniform():
    I = Interval(0, 1)
    m = 100_000
    x = sample_uniform_in_intersection(I, np.full(m, 0.02), 0.1, np.random.default_rng(3))[:, 0]
    assert x.min() > 0 and x.max() < 0.12
    assert stats.kstest(x, stats.uniform(0, 0.12).cdf).pvalue > 1e-3


def test_uniform_sampler_empty_intersection():
    with pytest.raises(GeometryError):
        sample_uniform_in_intersection(Interval(0, 1), np.array([2.0]), 0.5, np.random.default_rng(0))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 2 * math.pi))
def test_ray_exit_lands_on_boundary(u, v, theta):
    R = Rectangle((0, 0), (2, 1))
    o = np.array([0.01 + 1.98 * u, 0.01 + 0.98 * v])
    e = np.array([math.cos(theta), math.sin(theta)])
    t_in, t_out = R.ray_intersection(o, e)
    assert float(t_in) < 0 < float(t_out)
    p = o + float(t_out) * e
    assert float(R.distance_to_boundary(p)) < 1e-9
