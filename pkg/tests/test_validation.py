import json
import math

import numpy as np
import pytest

from niche.geometry import Disk, Interval, Rectangle
from niche.kernels import EffectiveCoefficients, ProcessParams
from niche.lattice import GridField, cell_kernel_integrals, make_lattice
from niche.particles import HistogramEstimate, make_histogram_grid
from niche.pde import make_operator, solve
from niche.validation import (
    GridMismatchError,
    ResidualEntry,
    ResidualReport,
    check_jump_normalization,
    check_neumann_local,
    check_neumann_nonlocal,
    check_pi_normalization,
    check_symmetry,
    check_walk_normalization,
    compare_particle_pde,
    compute_c_o,
    compute_c_star,
    exterior_probe_cells,
    jump_mass,
    nonlocal_residuals,
    walk_mass,
)

I = Interval(0, 1)


def test_report_bookkeeping():
    r = ResidualReport()
    r.add(ResidualEntry("b", 1.0 + 1e-9, 1.0, 1e-8, "x"), ResidualEntry("a", 0.5, 0.0, 0.1, "y", seed=3))
    assert not r.passed
    doc = json.loads(r.to_json())
    assert [d["id"] for d in doc] == ["a", "b"]
    assert doc[0] == {"id": "a", "computed": 0.5, "reference": 0.0, "tolerance": 0.1, "pass": False,
                      "method": "y", "seed": 3}
    r.add(ResidualEntry("a", 0.05, 0.0, 0.1, "y"))
    assert r.passed


def test_walk_mass_1d():
    P = ProcessParams(0.5, 0.3, 0.01)
    assert walk_mass(P, I, 0.5) == pytest.approx(1.0, abs=1e-8)
    assert walk_mass(P, I, 1 - 0.05) == pytest.approx(1.0, abs=1e-6)
    # the walk kernel does not involve p
    assert walk_mass(ProcessParams(0.5, 0.9, 0.01), I, 0.97) == walk_mass(P, I, 0.97)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_jump_mass_1d(s):
    P = ProcessParams(s, 1.0, 0.01)
    e = check_jump_normalization(P, I, [0.5, 1e-6, 0.995])
    assert e.passed and abs(e.computed - 1) < 1e-9


def test_normalisation_2d_probes():
    P = ProcessParams(0.5, 0.5, 0.01)
    R = Rectangle((0, 0), (1, 1))
    assert check_walk_normalization(P, R, [[0.5, 0.5], [0.02, 0.5], [0.03, 0.04]]).passed
    assert abs(jump_mass(P, R, [0.3, 0.001]) - 1) < 1e-4
    assert abs(jump_mass(P, Disk((0, 0), 1), [0.0, 0.99]) - 1) < 1e-4


def test_symmetry_1d():
    P = ProcessParams(0.4, 0.5, 0.01)
    pairs = np.random.default_rng(0).uniform(0, 1, (10, 2))
    assert check_symmetry(P, I, pairs, "jump").passed
    assert check_symmetry(P, I, pairs, "walk").passed


def test_pi_normalisation():
    P = ProcessParams(0.5, 0.5, 0.01)
    for e in check_pi_normalization(P, [0.2, 3.0]):
        assert e.passed, e
    for e in check_pi_normalization(P, [[0.0, 0.0]], n=2):
        assert e.passed, e


def test_constants():
    for n, ref in ((1, 2 / 3), (2, math.pi / 2), (3, 4 * math.pi / 5)):
        closed, quad = compute_c_o(n)
        assert closed == pytest.approx(ref, abs=1e-12) and quad == pytest.approx(ref, abs=1e-10)
    hc = compute_c_star(1)
    assert hc.c_star == pytest.approx(0.75, abs=1e-12)
    assert hc.b_0 == pytest.approx(0.5, abs=1e-12)
    mc = compute_c_star(1, samples=400_000, seed=1, monte_carlo=True)
    assert abs(mc.c_star - 0.75) < 5 * mc.c_star_se
    hc2 = compute_c_star(2, samples=400_000, seed=2)
    assert hc2.vector[-1] < 0 and abs(hc2.vector[0]) < 4 * hc2.vector_se[0]


def _cos_field(dx):
    op = make_operator(I, dx, 0.5)
    c = EffectiveCoefficients.from_params(ProcessParams(0.5, 0.5, 1e-3), 1)
    return op, solve(op, c, lambda x: np.cos(np.pi * x) + 1, [0.02])[0]


def test_neumann_local_residual():
    lat = make_lattice(I, 1 / 64)
    const = GridField.from_function(I, lat, lambda y: 0 * y + 1.0, fill=1.0)
    assert check_neumann_local(const).computed == 0.0
    e = check_neumann_local(GridField.from_function(I, lat, lambda y: np.cos(np.pi * y)))
    assert e.computed < 2 * np.pi**2 / 64


def test_neumann_nonlocal_on_solver_field_and_perturbation():
    op, f = _cos_field(1 / 64)
    probes = exterior_probe_cells(f, I, 20)
    assert len(probes) == 20 and not np.any(I.contains(probes))
    assert check_neumann_nonlocal(f, I, 0.5, probes).passed
    # raising U at one probe by eps raises the residual there by eps times the kernel mass of Omega
    eps = 1e-3
    g = f.copy()
    idx = op.lattice.index_of(probes[0])
    g.values[idx] += eps
    base = nonlocal_residuals(f, I, 0.5, probes[:1])[0]
    moved = nonlocal_residuals(g, I, 0.5, probes[:1])[0]
    mass = cell_kernel_integrals(f.lattice.centers()[f.interior], f.lattice.dx, 0.5, probes[:1]).sum()
    assert moved - base == pytest.approx(eps * mass, rel=1e-9)


def test_neumann_nonlocal_constant_field_is_exact():
    lat = make_lattice(I, 1 / 32)
    f = GridField.from_function(I, lat, lambda y: 0 * y + 2.5, fill=2.5)
    probes = exterior_probe_cells(f, I, 5)
    assert check_neumann_nonlocal(f, I, 0.3, probes).computed == 0.0
    with pytest.raises(ValueError):
        nonlocal_residuals(f, I, 0.3, [[0.5]])


def test_compare_identical_and_mismatched():
    op = make_operator(I, 1 / 16, 0.5)
    f = op.field(np.where(op.interior, 1.0, 0.0))
    grid = make_histogram_grid(I, 1 / 16)
    h = HistogramEstimate(grid, np.full(16, 10))
    assert compare_particle_pde(h, f) == pytest.approx(0.0, abs=1e-14)
    h2 = HistogramEstimate(grid, np.r_[np.full(8, 20), np.zeros(8, int)])
    assert compare_particle_pde(h2, f) == pytest.approx(1.0)
    with pytest.raises(GridMismatchError):
        compare_particle_pde(HistogramEstimate(make_histogram_grid(I, 1 / 32), np.ones(32, int)), f)
