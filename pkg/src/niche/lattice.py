"""Uniform cell-centred lattices and cell-integrated power kernels.

A lattice covers the bounding box of the niche widened by an exterior band.
Cells whose centre lies in the niche are *interior*; the rest carry exterior
(extended or phantom) values. Kernels are integrated exactly over cells, so a
piecewise-constant field is summed without further quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.signal import fftconvolve

from .geometry import Domain, Rectangle

BAND_DIAMETERS = 5.0
NEAR_CELLS = 10  # 2D cells closer than this (in cell widths) get the refined rule
FAR_ORDER = 5


@dataclass(frozen=True)
class Lattice:
    origin: tuple  # lower corner of cell 0
    dx: float
    shape: tuple

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @property
    def box(self):
        lo = np.array(self.origin)
        return lo, lo + self.dx * np.array(self.shape)

    def axes(self):
        return [self.origin[k] + self.dx * (np.arange(m) + 0.5) for k, m in enumerate(self.shape)]

    def centers(self) -> np.ndarray:
        """Cell centres, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def index_of(self, x) -> tuple:
        x = np.atleast_1d(np.asarray(x, float))
        idx = np.floor((x - np.array(self.origin)) / self.dx).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise ValueError(f"point {x} lies outside the lattice")
        return tuple(int(i) for i in idx)

    def same_as(self, other: "Lattice") -> bool:
        return (
            self.shape == other.shape
            and math.isclose(self.dx, other.dx, rel_tol=1e-12)
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.dx)
        )


def make_lattice(domain: Domain, dx: float, band: float = BAND_DIAMETERS) -> Lattice:
    """Lattice aligned with the lower corner of the domain's bounding box."""
    if not dx > 0:
        raise ValueError("dx must be positive")
    lo, hi = domain.bounds
    pad = int(math.ceil(band * domain.diameter / dx - 1e-9))
    inner = np.ceil((hi - lo) / dx - 1e-9).astype(int)
    shape = tuple(int(m) + 2 * pad for m in inner)
    origin = tuple(float(v) for v in lo - pad * dx)
    return Lattice(origin=origin, dx=float(dx), shape=shape)


@dataclass
class GridField:
    """Values on a lattice with interior/exterior tags.

    ``far_value`` is used beyond the lattice box (the far-field limit of the
    exterior extension).
    """

    lattice: Lattice
    values: np.ndarray
    interior: np.ndarray
    far_value: float = 0.0
    extended: bool = False
    meta: dict = field(default_factory=dict)

    def copy(self) -> "GridField":
        return GridField(self.lattice, self.values.copy(), self.interior, self.far_value, self.extended, dict(self.meta))

    @property
    def mass(self) -> float:
        return float(np.sum(self.values[self.interior]) * self.lattice.cell_volume)

    def interior_values(self) -> np.ndarray:
        return self.values[self.interior]

    @classmethod
    def from_function(cls, domain: Domain, lattice: Lattice, fn, fill: float = 0.0) -> "GridField":
        c = lattice.centers()
        mask = domain.contains(c)
        vals = np.full(lattice.shape, float(fill))
        pts = c[mask]
        vals[mask] = fn(pts[:, 0] if lattice.n == 1 else pts)
        return cls(lattice, vals, mask)


def interior_mask(domain: Domain, lattice: Lattice) -> np.ndarray:
    return domain.contains(lattice.centers())


# --------------------------------------------------------------------------
# cell-integrated weights of |t|^{-n-2s}


def _weights_1d(shape, s: float, dx: float) -> np.ndarray:
    m = shape[0]
    k = np.abs(np.arange(-(m - 1), m)).astype(float)
    k[m - 1] = 1.0
    w = ((k - 0.5) ** (-2 * s) - (k + 0.5) ** (-2 * s)) / (2 * s)
    w[m - 1] = 0.0
    return w * dx ** (-2 * s)


@lru_cache(maxsize=16)
def _unit_weights_2d(m1: int, m2: int, s: float) -> np.ndarray:
    """∫ over unit cells at integer offsets (|k1| < m1, |k2| < m2) of |t|^{-2-2s}; zero at the origin."""
    k1 = np.arange(m1, dtype=float)
    k2 = np.arange(m2, dtype=float)
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    # far cells: 5x5 Gauss; near cells: 4x4 sub-squares with 8x8 Gauss
    t5, w5 = leggauss(FAR_ORDER)
    acc = np.zeros(K1.shape)
    with np.errstate(divide="ignore"):
        for a, wa in zip(0.5 * t5, 0.5 * w5):
            for b, wb in zip(0.5 * t5, 0.5 * w5):
                acc += wa * wb * ((K1 + a) ** 2 + (K2 + b) ** 2) ** (-1 - s)
    near = NEAR_CELLS
    t8, w8 = leggauss(8)
    sub = (np.arange(4) + 0.5) / 4 - 0.5
    u = (sub[:, None] + 0.125 * t8[None, :]).ravel()
    wu = np.tile(0.125 * w8, 4)
    for i in range(min(near, m1)):
        for j in range(min(near, m2)):
            if i == 0 and j == 0:
                continue
            X = (i + u)[:, None]
            Y = (j + u)[None, :]
            acc[i, j] = np.sum(wu[:, None] * wu[None, :] * (X * X + Y * Y) ** (-1 - s))
    acc[0, 0] = 0.0
    full = np.concatenate([acc[:0:-1], acc], axis=0)
    return np.concatenate([full[:, :0:-1], full], axis=1)


def kernel_weights(lattice: Lattice, s: float) -> np.ndarray:
    """Weights w_k = ∫_{cell_k} |t|^{-n-2s} dt at every lattice offset k (array of odd size, centred)."""
    if lattice.n == 1:
        return _weights_1d(lattice.shape, s, lattice.dx)
    m1, m2 = lattice.shape
    return _unit_weights_2d(m1, m2, float(s)) * lattice.dx ** (-2 * s)


def singular_moment(n: int, s: float, dx: float) -> float:
    """∫ over the centred cell of t_1^2 |t|^{-n-2s} dt."""
    a = 0.5 * dx
    if n == 1:
        return 2 * a ** (2 - 2 * s) / (2 - 2 * s)
    # half of ∫_{square} |t|^{-2s}, in polar coordinates over eight triangles
    g = integrate.quad(lambda phi: (1.0 / math.cos(phi)) ** (2 - 2 * s), 0.0, math.pi / 4, epsabs=1e-14)[0]
    return 0.5 * 8 * a ** (2 - 2 * s) * g / (2 - 2 * s)


def convolve(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """out[i] = Σ_j values[j] * w[i - j] on the lattice."""
    return fftconvolve(values, weights, mode="same")


def far_mass(lattice: Lattice, s: float, points: np.ndarray) -> np.ndarray:
    """∫ outside the lattice box of |x - y|^{-n-2s} dy for points inside the box."""
    lo, hi = lattice.box
    if lattice.n == 1:
        x = np.asarray(points, float).reshape(-1)
        return ((x - lo[0]) ** (-2 * s) + (hi[0] - x) ** (-2 * s)) / (2 * s)
    from .kernels import _angle_nodes_inside, _rays

    box = Rectangle(tuple(lo), tuple(hi))
    pts = np.asarray(points, float).reshape(-1, 2)
    out = np.empty(len(pts))
    for start in range(0, len(pts), 2048):
        p = pts[start : start + 2048]
        phi, w = _angle_nodes_inside(box, p, k=24)
        _, t_out = _rays(box, p, phi)
        out[start : start + 2048] = np.sum(w * t_out ** (-2 * s), axis=1) / (2 * s)
    return out


def cell_kernel_integrals(domain_cells: np.ndarray, dx: float, s: float, x: np.ndarray) -> np.ndarray:
    """∫_{cell_j} |x - y|^{-n-2s} dy for arbitrary points ``x`` (m, n) and cells centred at ``domain_cells`` (c, n).

    Exact in 1D. In 2D the same rules as :func:`kernel_weights`: 5x5 Gauss per
    cell, and 4x4 sub-squares of 8x8 Gauss within ``NEAR_CELLS`` cell widths.
    """
    x = np.atleast_2d(np.asarray(x, float))
    c = np.atleast_2d(np.asarray(domain_cells, float))
    n = c.shape[1]
    if n == 1:
        d = c[None, :, 0] - x[:, None, 0]
        lo = d - 0.5 * dx
        hi = d + 0.5 * dx
        if np.any((lo < 0) & (hi > 0)):
            raise ValueError("point lies inside a cell")
        alo, ahi = np.minimum(np.abs(lo), np.abs(hi)), np.maximum(np.abs(lo), np.abs(hi))
        with np.errstate(divide="ignore"):
            return (alo ** (-2 * s) - ahi ** (-2 * s)) / (2 * s)
    t, w = leggauss(FAR_ORDER)
    out = np.zeros((len(x), len(c)))
    for a, wa in zip(0.5 * dx * t, 0.5 * w):
        for b, wb in zip(0.5 * dx * t, 0.5 * w):
            y = c + np.array([a, b])
            r2 = np.sum((y[None] - x[:, None]) ** 2, axis=-1)
            out += wa * wb * r2 ** (-1 - s)
    out *= dx * dx
    off = np.abs(c[None] - x[:, None]) / dx
    near = (off[..., 0] < NEAR_CELLS - 0.5) & (off[..., 1] < NEAR_CELLS - 0.5)
    if np.any(near):
        t8, w8 = leggauss(8)
        sub = (np.arange(4) + 0.5) / 4 - 0.5
        u = (sub[:, None] + 0.125 * t8[None, :]).ravel() * dx
        wu = np.tile(0.125 * w8, 4)
        for i, j in zip(*np.nonzero(near)):
            y1 = c[j, 0] + u[:, None] - x[i, 0]
            y2 = c[j, 1] + u[None, :] - x[i, 1]
            out[i, j] = dx * dx * np.sum(wu[:, None] * wu[None, :] * (y1 * y1 + y2 * y2) ** (-1 - s))
    return out
