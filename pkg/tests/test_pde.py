import math

import numpy as np
import pytest
from scipy import integrate

from niche.geometry import Interval, Rectangle
from niche.kernels import EffectiveCoefficients, ProcessParams
from niche.lattice import GridField, Lattice, cell_kernel_integrals, kernel_weights, make_lattice
from niche.pde import (
    StabilityError,
    classical_laplacian,
    extend_exterior,
    extend_exterior_punched,
    fractional_laplacian,
    make_operator,
    point_mass,
    solve,
    step_time,
)

I = Interval(0, 1)


def coeffs(s, p, h=1e-3, n=1):
    return EffectiveCoefficients.from_params(ProcessParams(s, p, h), n)


def test_make_lattice_band():
    lat = make_lattice(I, 0.1, band=5.0)
    assert lat.shape == (110,) and lat.origin[0] == pytest.approx(-5.0)
    with pytest.raises(ValueError):
        make_lattice(I, 0.0)


def test_kernel_weights_1d_exact():
    s, dx = 0.3, 0.05
    lat = Lattice((0.0,), dx, (40,))
    w = kernel_weights(lat, s)
    centre = len(w) // 2
    for k in (1, 2, 7):
        a, b = (k - 0.5) * dx, (k + 0.5) * dx
        exact = (a ** (-2 * s) - b ** (-2 * s)) / (2 * s)
        assert w[centre + k] == pytest.approx(exact, rel=1e-12)
        assert w[centre - k] == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("offset", [(1, 0), (2, 3), (12, 5)])
def test_cell_integrals_2d_match_dblquad(offset):
    s, dx = 0.4, 0.1
    cells = np.array([[offset[0] * dx, offset[1] * dx]])
    got = cell_kernel_integrals(cells, dx, s, np.zeros((1, 2)))[0, 0]
    f = lambda y, x: (x * x + y * y) ** (-1 - s)
    cx, cy = cells[0]
    ref, _ = integrate.dblquad(f, cx - dx / 2, cx + dx / 2, cy - dx / 2, cy + dx / 2, epsabs=0, epsrel=1e-12)
    assert got == pytest.approx(ref, rel=1e-9)


def test_extension_examples():
    assert extend_exterior(lambda y: 0 * y + 3.0, 1.7, domain=I, s=0.4) == pytest.approx(3.0)
    assert extend_exterior(lambda y: y, 2.0, domain=I, s=0.5) == pytest.approx(2 * (1 - math.log(2)), rel=1e-8)
    assert extend_exterior(lambda y: y, 1000.0, domain=I, s=0.5) == pytest.approx(0.5, rel=0.01)


def test_punched_extension():
    u = lambda y: y
    far = extend_exterior(u, 1.3, domain=I, s=0.5)
    assert extend_exterior_punched(u, 1.3, 0.1, domain=I, s=0.5) == pytest.approx(far, rel=1e-10)
    assert extend_exterior_punched(lambda y: 0 * y + 2.0, 1.03, 0.05, domain=I, s=0.5) == pytest.approx(2.0)
    ref = extend_exterior(u, 1.03, domain=I, s=0.5)
    errs = [abs(extend_exterior_punched(u, 1.03, h, domain=I, s=0.5) - ref) for h in (0.1, 0.05, 0.025)]
    assert errs[0] > errs[1] > errs[2]


def test_fractional_laplacian_constant_and_cosine():
    lat = Lattice((-20.0,), 1 / 64, (40 * 64,))
    c = lat.centers()[..., 0]
    inside = np.ones(lat.shape, bool)
    const = GridField(lat, np.full(lat.shape, 2.0), inside, far_value=2.0)
    i = lat.index_of(1 / 128)
    assert abs(fractional_laplacian(const, i, 0.5)) < 1e-10
    # on the line, cos(pi x) is an eigenfunction; the unnormalised kernel gives pi * |pi| = pi^2
    cos = GridField(lat, np.cos(np.pi * c), inside, far_value=0.0)
    target = np.pi**2 * np.cos(np.pi * c[i])
    assert fractional_laplacian(cos, i, 0.5) == pytest.approx(target, rel=0.02)


def test_operator_rows_annihilate_constants():
    op = make_operator(I, 1 / 64, 0.5)
    A = op.dense_fractional()
    assert np.max(np.abs(A.sum(axis=1))) < 1e-10 * np.max(np.abs(A))


def test_classical_laplacian():
    lat = make_lattice(I, 1e-3, band=0.01)
    f = GridField.from_function(I, lat, lambda y: y**2)
    i = lat.index_of(0.5)
    assert classical_laplacian(f, i) == pytest.approx(2.0, abs=1e-8)
    g = GridField.from_function(I, lat, lambda y: 0 * y + 4.0)
    assert classical_laplacian(g, i) == 0.0
    R = Rectangle((0, 0), (1, 1))
    lat2 = make_lattice(R, 1 / 32, band=0.1)
    h = GridField.from_function(R, lat2, lambda p: 1.0 + p[:, 1])
    edge = lat2.index_of([0.5 / 32, 0.5])  # first cell next to the wall x = 0
    assert abs(classical_laplacian(h, edge)) < 1e-10


def test_step_keeps_constants_and_mass():
    op = make_operator(I, 1 / 128, 0.5)
    c = coeffs(0.5, 0.5)
    dt = op.dt_max(c)
    f = op.field(np.where(op.interior, 3.0, 0.0))
    g = step_time(f, dt, c, op)
    assert np.max(np.abs(g.values - f.values)[op.interior]) < 1e-12
    x = op.lattice.centers()[..., 0]
    f = op.field(np.where(op.interior, np.exp(-30 * (x - 0.3) ** 2), 0.0))
    g = step_time(f, dt, c, op)
    assert g.mass == pytest.approx(f.mass, rel=1e-10)
    with pytest.raises(StabilityError):
        step_time(f, 2 * dt, c, op)


def test_point_mass_has_unit_mass():
    op = make_operator(I, 1 / 64, 0.5)
    assert np.sum(point_mass(op, 0.5)) * op.lattice.dx == pytest.approx(1.0)
    assert np.count_nonzero(point_mass(op, 0.5)) == 2  # 0.5 is a cell face
    with pytest.raises(ValueError):
        point_mass(op, 1.5)


def test_solve_zero_time_and_long_time():
    op = make_operator(I, 1 / 64, 0.5)
    c = coeffs(0.5, 0.5)
    init = lambda x: np.cos(np.pi * x) + 1
    out = solve(op, c, init, [0.0, 12.0])
    x = op.lattice.centers()[op.interior][:, 0]
    assert np.allclose(out[0].interior_values(), init(x))
    assert out[0].meta["steps"] == 0
    flat = out[1].mass / I.volume
    assert np.max(np.abs(out[1].interior_values() - flat)) < 1e-3


def test_jumps_give_heavier_tails():
    t = 0.01
    vals = {}
    for p in (0.0, 1.0):
        op = make_operator(I, 1 / 128, 0.5)
        f = solve(op, coeffs(0.5, p), point_mass(op, 0.5), [t])[0]
        vals[p] = f
    x = vals[0.0].lattice.centers()[..., 0]
    far = vals[0.0].interior & (np.abs(x - 0.5) >= 0.4)
    assert np.all(vals[1.0].values[far] > vals[0.0].values[far])


def test_pure_brownian_cosine_mode():
    op = make_operator(I, 1 / 128, 0.5)
    c = coeffs(0.5, 0.0)
    f = solve(op, c, lambda x: np.cos(np.pi * x) + 1, [0.2])[0]
    x = op.lattice.centers()[op.interior][:, 0]
    exact = np.exp(-c.alpha * np.pi**2 * 0.2) * np.cos(np.pi * x) + 1
    assert np.linalg.norm(f.interior_values() - exact) / np.linalg.norm(exact) < 1e-3
