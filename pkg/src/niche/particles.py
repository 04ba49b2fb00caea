"""Particle ensembles of the reflected walk/jump process and its phantom variant.

Every particle owns a counter-based random stream, so the ensemble can be cut
into any number of chunks (and worker threads) without changing a single
position; histograms are integer counts summed across chunks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import splu

from .geometry import Domain, Interval, Rectangle, unit_sphere_area
from .kernels import SLOT_BRANCH, ProcessParams, sample_jump_step, sample_walk_step
from .lattice import GridField, Lattice, convolve, far_mass, interior_mask, kernel_weights, make_lattice
from .rng import CounterRNG, as_batch

INIT_STEP = 0xFFFFFFFF  # counter step reserved for drawing the initial law
CHUNK = 1 << 17


@dataclass
class HistogramGrid:
    """Cells of a lattice that meet the domain, with the measure of cell ∩ Ω."""

    lattice: Lattice
    cells: np.ndarray  # flat lattice indices
    volumes: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return self.lattice.centers().reshape(-1, self.lattice.n)[self.cells]

    def same_as(self, other: "HistogramGrid") -> bool:
        return self.lattice.same_as(other.lattice) and np.array_equal(self.cells, other.cells)


def make_histogram_grid(domain: Domain, dx: float) -> HistogramGrid:
    lat = make_lattice(domain, dx, band=0.0)
    if isinstance(domain, (Interval, Rectangle)):
        vol = np.full(int(np.prod(lat.shape)), lat.cell_volume)
        # trailing cells that stick out of the domain keep only their overlap
        lo, hi = domain.bounds
        frac = np.ones(lat.shape)
        for ax, axis in enumerate(lat.axes()):
            over = np.clip(np.minimum(axis + 0.5 * dx, hi[ax]) - np.maximum(axis - 0.5 * dx, lo[ax]), 0.0, None) / dx
            shape = [1] * lat.n
            shape[ax] = -1
            frac = frac * over.reshape(shape)
        vol = vol * frac.reshape(-1)
    else:
        # 32x32 midpoint subsampling of each cell
        m = 32
        off = (np.arange(m) + 0.5) / m - 0.5
        c = lat.centers().reshape(-1, 2)
        vol = np.zeros(len(c))
        for a in off:
            pts = c[:, None, :] + dx * np.stack([np.full(m, a), off], axis=1)[None]
            vol += domain.contains(pts).sum(axis=1)
        vol *= lat.cell_volume / (m * m)
    keep = np.flatnonzero(vol > 0)
    return HistogramGrid(lat, keep, vol[keep])


@dataclass
class HistogramEstimate:
    grid: HistogramGrid
    counts: np.ndarray
    time: float = 0.0
    step: int = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.grid.volumes)

    @property
    def centers(self) -> np.ndarray:
        return self.grid.centers


@dataclass
class ParticleEnsemble:
    positions: np.ndarray  # (N, n)
    time: float = 0.0
    step_count: int = 0


@dataclass
class SimConfig:
    params: ProcessParams
    domain: Domain
    N: int
    T: float
    initial: str = "point"  # point | uniform | tabulated
    x0: Sequence[float] | float | None = None
    seed: int = 0
    dx: float = 1 / 64
    snapshots: Sequence[float] | None = None
    table: GridField | None = None  # density for the tabulated initial law
    workers: int | None = None

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.initial not in ("point", "uniform", "tabulated"):
            raise ValueError(f"unknown initial law {self.initial!r}")
        if self.initial == "point":
            if self.x0 is None:
                raise ValueError("point initial law needs x0")
            if not np.all(self.domain.contains(np.atleast_1d(np.asarray(self.x0, float)))):
                raise ValueError("x0 must lie inside the domain")
        if self.initial == "tabulated" and self.table is None:
            raise ValueError("tabulated initial law needs a table")
        for t in self.snapshot_times:
            if t < 0 or t > self.T + 1e-12:
                raise ValueError(f"snapshot time {t} outside [0, T]")

    @property
    def snapshot_times(self) -> list[float]:
        return sorted(float(t) for t in (self.snapshots if self.snapshots is not None else [self.T]))

    def steps_for(self, t: float) -> int:
        """Snapshot times are rounded down to the tau lattice."""
        return int(math.floor(t / self.params.tau + 1e-9))


def step_particle(x, params: ProcessParams, domain: Domain, rng):
    """One step of the mixed process for each row of ``x`` (Bernoulli(p) jump, else walk)."""
    n = domain.n
    xs = np.atleast_2d(np.asarray(x, float).reshape(-1, n))
    scalar = np.ndim(x) == 0 or (n > 1 and np.ndim(x) == 1)
    batch = as_batch(rng, len(xs))
    jump = batch.uniform(SLOT_BRANCH)[:, 0] < params.p
    out = np.empty_like(xs)
    if np.any(jump):
        out[jump] = sample_jump_step(params, domain, xs[jump], batch.subset(jump)).reshape(-1, n)
    walk = ~jump
    if np.any(walk):
        out[walk] = sample_walk_step(params, domain, xs[walk], batch.subset(walk)).reshape(-1, n)
    if scalar:
        return float(out[0, 0]) if n == 1 else out[0]
    return out[:, 0] if n == 1 and np.ndim(x) == 1 else out


def _initial_positions(config: SimConfig, rng: CounterRNG, streams: np.ndarray) -> np.ndarray:
    n = config.domain.n
    m = len(streams)
    if config.initial == "point":
        return np.tile(np.atleast_1d(np.asarray(config.x0, float)), (m, 1))
    batch = rng.batch(streams, INIT_STEP)
    if config.initial == "uniform":
        lo, hi = config.domain.bounds
        out = np.empty((m, n))
        pending = np.arange(m)
        for attempt in range(10_000):
            if not len(pending):
                return out
            u = batch.uniform(attempt)[:, :n]
            y = lo + u * (hi - lo)
            ok = config.domain.contains(y)
            out[pending[ok]] = y[ok]
            pending = pending[~ok]
            batch = batch.subset(~ok)
        raise RuntimeError("uniform initial law: rejection cap exceeded")
    table = config.table
    lat = table.lattice
    c = lat.centers().reshape(-1, n)
    mass = np.where(table.interior.reshape(-1), np.clip(table.values.reshape(-1), 0, None), 0.0)
    cdf = np.cumsum(mass)
    if cdf[-1] <= 0:
        raise ValueError("tabulated initial law has no mass")
    cdf /= cdf[-1]
    out = np.empty((m, n))
    pending = np.arange(m)
    for attempt in range(10_000):
        if not len(pending):
            return out
        u = batch.uniform(2 * attempt)
        v = batch.uniform(2 * attempt + 1)
        idx = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), len(cdf) - 1)
        y = c[idx] + lat.dx * (np.concatenate([u[:, 1:], v], axis=1)[:, :n] - 0.5)
        ok = config.domain.contains(y)
        out[pending[ok]] = y[ok]
        pending = pending[~ok]
        batch = batch.subset(~ok)
    raise RuntimeError("tabulated initial law: rejection cap exceeded")


def _bin(grid: HistogramGrid, pos: np.ndarray) -> np.ndarray:
    lat = grid.lattice
    idx = np.floor((pos - np.array(lat.origin)) / lat.dx).astype(np.int64)
    idx = np.clip(idx, 0, np.array(lat.shape) - 1)
    flat = np.ravel_multi_index(tuple(idx.T), lat.shape)
    lookup = np.full(int(np.prod(lat.shape)), -1, dtype=np.int64)
    lookup[grid.cells] = np.arange(len(grid.cells))
    where = lookup[flat]
    if np.any(where < 0):
        raise RuntimeError("particle landed in a cell that does not meet the domain")
    return np.bincount(where, minlength=len(grid.cells)).astype(np.int64)


def _run_chunk(config: SimConfig, streams: np.ndarray, grid: HistogramGrid, targets: list[int]):
    rng = CounterRNG(config.seed)
    pos = _initial_positions(config, rng, streams)
    counts = []
    step = 0
    for target in targets:
        while step < target:
            pos = step_particle(pos, config.params, config.domain, rng.batch(streams, step))
            step += 1
        if not np.all(config.domain.contains(pos)):
            raise RuntimeError("a particle left the domain")
        counts.append(_bin(grid, pos))
    return counts, pos


def run_ensemble(config: SimConfig, grid: HistogramGrid | None = None, *, return_positions: bool = False):
    """Advance ``N`` particles; one histogram per snapshot time (rounded down to multiples of tau)."""
    grid = grid or make_histogram_grid(config.domain, config.dx)
    times = config.snapshot_times
    targets = [config.steps_for(t) for t in times]
    N = int(config.N)
    chunks = [np.arange(a, min(a + CHUNK, N), dtype=np.uint64) for a in range(0, N, CHUNK)]
    workers = config.workers or default_workers()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _run_chunk(config, c, grid, targets), chunks))
    else:
        results = [_run_chunk(config, c, grid, targets) for c in chunks]
    hists = []
    for k, (t, st) in enumerate(zip(times, targets)):
        counts = np.zeros(len(grid.cells), dtype=np.int64)
        for res in results:
            counts += res[0][k]
        hists.append(HistogramEstimate(grid, counts, time=st * config.params.tau, step=st))
    if return_positions:
        ens = ParticleEnsemble(
            np.concatenate([r[1] for r in results]), time=targets[-1] * config.params.tau, step_count=targets[-1]
        )
        return hists, ens
    return hists


def default_workers() -> int:
    env = os.environ.get("NICHE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def estimate_density(ensemble: ParticleEnsemble, grid: HistogramGrid) -> HistogramEstimate:
    pos = np.asarray(ensemble.positions, float)
    if pos.ndim == 1:
        pos = pos[:, None]
    if len(pos) == 0:
        raise ValueError("empty ensemble")
    return HistogramEstimate(grid, _bin(grid, pos), time=ensemble.time, step=ensemble.step_count)


# --------------------------------------------------------------------------
# phantom population (density level)


def _walk_offsets(lat: Lattice, r: float) -> np.ndarray:
    """π_W mass of each lattice offset cell: |cell_k ∩ B_r| / |B_r|."""
    dx = lat.dx
    reach = int(math.ceil(r / dx)) + 1
    k = np.arange(-reach, reach + 1)
    if lat.n == 1:
        lo = np.maximum((k - 0.5) * dx, -r)
        hi = np.minimum((k + 0.5) * dx, r)
        w = np.clip(hi - lo, 0.0, None) / (2 * r)
    else:
        # exact per-cell areas of the disk by the quadrant formula
        from .geometry import _disk_quadrant_area

        K1, K2 = np.meshgrid(k, k, indexing="ij")
        x0, x1 = (K1 - 0.5) * dx, (K1 + 0.5) * dx
        y0, y1 = (K2 - 0.5) * dx, (K2 + 0.5) * dx
        area = (
            _disk_quadrant_area(x1, y1, r)
            - _disk_quadrant_area(x0, y1, r)
            - _disk_quadrant_area(x1, y0, r)
            + _disk_quadrant_area(x0, y0, r)
        )
        w = area / (math.pi * r * r)
    return w


def _jump_offsets(lat: Lattice, params: ProcessParams) -> tuple[np.ndarray, float]:
    """π_J mass of each lattice offset cell (centred array of the kernel-weight shape)."""
    s, h, dx = params.s, params.h, lat.dx
    const = 2 * s * h ** (2 * s) / unit_sphere_area(lat.n)
    w = kernel_weights(lat, s).copy()
    centre = tuple(m - 1 for m in lat.shape)
    if lat.n == 1:
        m = lat.shape[0]
        k = np.abs(np.arange(-(m - 1), m)).astype(float)
        lo = np.maximum((k - 0.5) * dx, h)
        hi = (k + 0.5) * dx
        val = np.where(hi > lo, (lo ** (-2 * s) - hi ** (-2 * s)) / (2 * s), 0.0)
        own = np.where(k == 0, 2 * val, 0.0)
        w = np.where(k == 0, own, val)
        return const * w
    a = 0.5 * dx
    if h >= a:
        # cells cut by B_h: fine tensor quadrature with the indicator
        reach = int(math.ceil(h / dx)) + 1
        t, gw = np.polynomial.legendre.leggauss(8)
        sub = (np.arange(8) + 0.5) / 8 - 0.5
        u = (sub[:, None] + t[None, :] / 16).ravel()
        wu = np.tile(gw / 16, 8)
        for i in range(-reach, reach + 1):
            for j in range(-reach, reach + 1):
                X = (i + u)[:, None] * dx
                Y = (j + u)[None, :] * dx
                r2 = X * X + Y * Y
                with np.errstate(divide="ignore"):
                    f = np.where(r2 > h * h, r2 ** (-1 - s), 0.0)
                w[centre[0] + i, centre[1] + j] = dx * dx * np.sum(wu[:, None] * wu[None, :] * f)
    else:
        # own cell: annulus h < |t| < a, plus the square minus B_a
        g = integrate.quad(lambda phi: 1.0 - math.cos(phi) ** (2 * s), 0.0, math.pi / 4, epsabs=1e-15)[0]
        own = 2 * math.pi * (h ** (-2 * s) - a ** (-2 * s)) / (2 * s) + 8 * a ** (-2 * s) * g / (2 * s)
        w[centre] = own
    return const * w


@dataclass
class PhantomSetup:
    domain: Domain
    params: ProcessParams
    lattice: Lattice
    omega: np.ndarray
    core: np.ndarray  # Ω^{(λh)} cells
    collar: np.ndarray
    transport: np.ndarray  # centred offset weights of dπ
    far: np.ndarray
    ext_weights: np.ndarray
    ext_den: np.ndarray
    collar_solve: object = field(repr=False, default=None)


def make_phantom(domain: Domain, params: ProcessParams, dx: float, band: float = 5.0) -> PhantomSetup:
    r = params.walk_radius
    if r < 2 * dx:
        raise ValueError(f"grid too coarse: walk radius {r:g} resolves fewer than two cells of size {dx:g}")
    lat = make_lattice(domain, dx, band)
    c = lat.centers()
    omega = interior_mask(domain, lat)
    core = omega & (domain.distance_to_boundary(c) > r)
    collar = omega & ~core
    if not core.any():
        raise ValueError("Ω^{(λh)} is empty on this grid")
    jw = _jump_offsets(lat, params)
    ww = _walk_offsets(lat, r)
    transport = params.p * jw
    centre = tuple(m - 1 for m in lat.shape)
    reach = (ww.shape[0] - 1) // 2
    sl = tuple(slice(cc - reach, cc + reach + 1) for cc in centre)
    transport[sl] += (1 - params.p) * ww
    const = 2 * params.s * params.h ** (2 * params.s) / unit_sphere_area(lat.n)
    far = np.zeros(lat.shape)
    far[core] = params.p * const * far_mass(lat, params.s, c[core])
    ext_w = kernel_weights(lat, params.s)
    ext_den = convolve(omega.astype(float), ext_w)
    setup = PhantomSetup(domain, params, lat, omega, core, collar, transport, far, ext_w, ext_den)
    setup.collar_solve = _collar_operator(setup, ww)
    return setup


def _collar_operator(setup: PhantomSetup, ww: np.ndarray):
    """Collar values are ball averages over Ω (collar included): (I − A_cc) V_c = A_co V_core."""
    lat = setup.lattice
    omega_idx = np.flatnonzero(setup.omega)
    pos = -np.ones(int(np.prod(lat.shape)), dtype=np.int64)
    pos[omega_idx] = np.arange(omega_idx.size)
    collar_idx = np.flatnonzero(setup.collar)
    reach = (ww.shape[0] - 1) // 2
    offs = np.argwhere(ww > 0) - reach
    vals = ww[ww > 0]
    rows, cols, data = [], [], []
    coords = np.array(np.unravel_index(collar_idx, lat.shape)).T
    for o, v in zip(offs, vals):
        nb = coords + o
        ok = np.all((nb >= 0) & (nb < np.array(lat.shape)), axis=1)
        flat = np.full(len(nb), -1)
        flat[ok] = np.ravel_multi_index(tuple(nb[ok].T), lat.shape)
        ok &= flat >= 0
        ok[ok] = setup.omega.reshape(-1)[flat[ok]]
        rows.append(np.flatnonzero(ok))
        cols.append(pos[flat[ok]])
        data.append(np.full(ok.sum(), v))
    A = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(collar_idx.size, omega_idx.size)
    )
    rowsum = np.asarray(A.sum(axis=1)).ravel()
    A = sparse.diags(1.0 / rowsum) @ A
    is_collar = setup.collar.reshape(-1)[omega_idx]
    A_cc = A[:, is_collar]
    A_co = A[:, ~is_collar]
    M = (sparse.identity(collar_idx.size) - A_cc).tocsc()
    lu = splu(M)
    core_in_omega = omega_idx[~is_collar]

    def solve_collar(values: np.ndarray) -> np.ndarray:
        rhs = A_co @ values.reshape(-1)[core_in_omega]
        return lu.solve(rhs)

    return solve_collar


def phantom_reset(setup: PhantomSetup, values: np.ndarray) -> np.ndarray:
    """Collar := ball averages over Ω; exterior := kernel-weighted averages over Ω."""
    out = np.array(values, float, copy=True)
    out[setup.collar] = setup.collar_solve(out)
    num = convolve(np.where(setup.omega, out, 0.0), setup.ext_weights)
    ext = ~setup.omega
    out[ext] = num[ext] / setup.ext_den[ext]
    return out


def phantom_far_value(setup: PhantomSetup, values: np.ndarray) -> float:
    return float(np.mean(values[setup.omega]))


def phantom_step(setup: PhantomSetup, values: np.ndarray) -> np.ndarray:
    """V(x, t+τ) = ∫ V_h(y, t) dπ(y; x) on Ω^{(λh)}, then the reset."""
    moved = convolve(values, setup.transport) + setup.far * phantom_far_value(setup, values)
    out = np.where(setup.core, moved, values)
    return phantom_reset(setup, out)


def run_phantom_process(config: SimConfig, setup: PhantomSetup | None = None) -> list[GridField]:
    """Density-level phantom iteration; one GridField (Ω plus band) per snapshot."""
    setup = setup or make_phantom(config.domain, config.params, config.dx)
    lat = setup.lattice
    if config.initial == "point":
        x0 = np.atleast_1d(np.asarray(config.x0, float))
        rel = (x0 - np.array(lat.origin)) / lat.dx
        choices = [[math.floor(r) - 1, math.floor(r)] if abs(r - round(r)) < 1e-9 else [math.floor(r)] for r in rel]
        V = np.zeros(lat.shape)
        combos = np.array(np.meshgrid(*choices, indexing="ij")).reshape(lat.n, -1).T
        for cidx in combos:
            V[tuple(cidx)] += 1.0 / (len(combos) * lat.cell_volume)
    elif config.initial == "uniform":
        V = np.where(setup.omega, 1.0 / (setup.omega.sum() * lat.cell_volume), 0.0)
    else:
        if not config.table.lattice.same_as(lat):
            raise ValueError("tabulated initial law must live on the phantom lattice")
        V = np.where(setup.omega, config.table.values, 0.0)
    V = phantom_reset(setup, V)
    out = []
    step = 0
    for t in config.snapshot_times:
        target = config.steps_for(t)
        while step < target:
            V = phantom_step(setup, V)
            step += 1
        f = GridField(lat, V.copy(), setup.omega, phantom_far_value(setup, V), extended=True)
        f.meta = {"time": step * config.params.tau, "steps": step, "mass": f.mass}
        out.append(f)
    return out
