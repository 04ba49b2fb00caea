"""Mixed local/nonlocal heat equation with the two Neumann conditions.

    ∂_t U = α ΔU − β (−Δ)^s U   in Ω,

with ∂_ν U = 0 on ∂Ω (mirrored ghost cells, i.e. zero flux through the
boundary faces) and the nonlocal condition outside Ω, imposed by setting the
exterior values to the kernel-weighted average of the interior ones.

(−Δ)^s is the unnormalised singular integral ∫ (U(x) − U(y)) |x−y|^{−n−2s} dy.
On the lattice it is summed with exact cell integrals of the kernel, a
second-difference correction for the cell containing x, and a far-field
closure beyond the lattice box where U equals its limit ū.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .geometry import Domain
from .kernels import EffectiveCoefficients, _angle_nodes_outside, _gauss, _rays
from .lattice import (
    BAND_DIAMETERS,
    GridField,
    Lattice,
    cell_kernel_integrals,
    convolve,
    far_mass,
    interior_mask,
    kernel_weights,
    make_lattice,
    singular_moment,
)


class StabilityError(ValueError):
    """Requested time step exceeds the explicit stability bound."""


# --------------------------------------------------------------------------
# exterior extension at arbitrary points


def _as_exterior(domain: Domain, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, float))
    if domain.n == 1:
        x = x.reshape(-1, 1)
    else:
        x = x.reshape(-1, 2)
    inside = domain.contains(x) | (domain.distance_to_boundary(x) == 0)
    if np.any(inside):
        raise ValueError("extension is defined outside the closed domain only")
    return x


def _polar_moments(domain: Domain, u: Callable, x: np.ndarray, s: float, h: float = 0.0):
    """(∫ u |x-y|^{-2-2s}, ∫ |x-y|^{-2-2s}) over Ω minus B_h(x), rays from exterior x."""
    phi, w = _angle_nodes_outside(domain, x[None], k=48, h=h if h > 0 else None)
    t_in, t_out = _rays(domain, x[None], phi)
    lo = np.maximum(np.maximum(t_in, 0.0), h)
    hi = np.maximum(t_out, lo)
    live = hi > lo
    # Gauss in log(rho): rho^{-1-2s} rho drho = rho^{1-2s} dlog(rho)
    with np.errstate(divide="ignore"):
        a, b = np.log(np.where(live, lo, 1.0)), np.log(np.where(live, hi, 1.0))
    g, gw = _gauss(a, b, 24)
    rho = np.exp(g)
    e = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    pts = x + rho[..., None] * e[..., None, :]
    vals = np.asarray(u(pts.reshape(-1, 2)), float).reshape(rho.shape)
    base = gw * rho ** (-2 * s)
    num = np.sum(w[..., None] * base * vals)
    den = np.sum(w[..., None] * base)
    return num, den


def _moments(domain: Domain, u, x: np.ndarray, s: float, h: float = 0.0):
    """Numerator and denominator of the extension at one exterior point."""
    if isinstance(u, GridField):
        lat = u.lattice
        cells = lat.centers()[u.interior]
        vals = u.values[u.interior]
        if lat.n == 1 and h > 0:
            m = _punched_cells_1d(cells[:, 0], lat.dx, s, float(x[0]), h)
        elif h > 0:
            m = cell_kernel_integrals(cells, lat.dx, s, x[None])[0]
            m = np.where(np.linalg.norm(cells - x, axis=1) > h, m, 0.0)
        else:
            m = cell_kernel_integrals(cells, lat.dx, s, x[None])[0]
        return float(np.sum(m * vals)), float(np.sum(m))
    if domain.n == 1:
        x0 = float(x[0])
        f = lambda y, p: (u(y) if p else 1.0) * abs(x0 - y) ** (-1 - 2 * s)
        pieces = [(domain.a, min(domain.b, x0 - h)), (max(domain.a, x0 + h), domain.b)]
        num = den = 0.0
        for lo, hi in pieces:
            if hi > lo:
                num += integrate.quad(f, lo, hi, args=(True,), epsabs=0, epsrel=1e-12, limit=200)[0]
                den += integrate.quad(f, lo, hi, args=(False,), epsabs=0, epsrel=1e-12, limit=200)[0]
        return num, den
    return _polar_moments(domain, u, x, s, h)


def _punched_cells_1d(c, dx, s, x, h):
    lo = c - 0.5 * dx
    hi = c + 0.5 * dx

    def piece(a, b):
        a = np.maximum(a, lo)
        b = np.minimum(b, hi)
        ok = b > a
        da, db = np.abs(a - x), np.abs(b - x)
        near, far = np.minimum(da, db), np.maximum(da, db)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (near ** (-2 * s) - far ** (-2 * s)) / (2 * s)
        return np.where(ok, val, 0.0)

    return piece(-np.inf, x - h) + piece(x + h, np.inf)


def extend_exterior(u, x, *, domain: Domain, s: float):
    """Kernel-weighted average of ``u`` over Ω seen from the exterior point(s) ``x``.

    ``u`` is a callable on Ω or a :class:`GridField` (piecewise constant on
    interior cells, integrated exactly per cell).
    """
    xs = _as_exterior(domain, x)
    out = np.array([_ratio(*_moments(domain, u, p, s)) for p in xs])
    return float(out[0]) if np.ndim(x) == 0 or (domain.n == 2 and np.ndim(x) == 1) else out


def extend_exterior_punched(u, x, h: float, *, domain: Domain, s: float):
    """As :func:`extend_exterior`, integrating over Ω minus B_h(x)."""
    if not h > 0:
        raise ValueError("h must be positive")
    xs = _as_exterior(domain, x)
    out = np.array([_ratio(*_moments(domain, u, p, s, h)) for p in xs])
    return float(out[0]) if np.ndim(x) == 0 or (domain.n == 2 and np.ndim(x) == 1) else out


def _ratio(num, den):
    if not den > 0:
        raise ValueError("Ω minus B_h(x) is empty; punched extension undefined")
    return num / den


# --------------------------------------------------------------------------
# lattice operators


@dataclass
class OperatorAssembly:
    """Matrix-free discrete operators on a fixed lattice.

    The fractional part acts on a full lattice field whose exterior has been
    extended; ``dense_fractional`` assembles the map from interior values to
    the operator applied after extension.
    """

    domain: Domain
    lattice: Lattice
    s: float

    def __post_init__(self):
        lat = self.lattice
        self.interior = interior_mask(self.domain, lat)
        if not self.interior.any():
            raise ValueError("lattice has no interior cells; dx too coarse")
        self.weights = kernel_weights(lat, self.s)
        chi = self.interior.astype(float)
        self._ext_den = convolve(chi, self.weights)
        self._row_total = convolve(np.ones(lat.shape), self.weights)
        self._sing = singular_moment(lat.n, self.s, lat.dx) / (2 * lat.dx**2)
        self._far = np.zeros(lat.shape)
        self._far[self.interior] = far_mass(lat, self.s, lat.centers()[self.interior])
        # interior-interior faces along each axis
        self._faces = []
        for ax in range(lat.n):
            a = np.moveaxis(self.interior, ax, 0)
            self._faces.append(np.moveaxis(a[1:] & a[:-1], 0, ax))

    # -- extension ------------------------------------------------------------

    def far_value(self, values: np.ndarray) -> float:
        F = self._far[self.interior]
        return float(np.sum(F * values[self.interior]) / np.sum(F))

    def extend(self, values: np.ndarray) -> np.ndarray:
        """Exterior cells := kernel-weighted average of the interior cells."""
        out = np.array(values, dtype=float, copy=True)
        num = convolve(np.where(self.interior, out, 0.0), self.weights)
        ext = ~self.interior
        out[ext] = num[ext] / self._ext_den[ext]
        return out

    def nonlocal_residual(self, values: np.ndarray) -> np.ndarray:
        """Σ_{j∈Ω} w(x_e − y_j)(U_e − U_j) at exterior cells (zero after extension)."""
        num = convolve(np.where(self.interior, values, 0.0), self.weights)
        r = values * self._ext_den - num
        return r[~self.interior]

    # -- operators --------------------------------------------------------------

    def fractional(self, values: np.ndarray, far_value: float | None = None, *, mask=None) -> np.ndarray:
        """Discrete (−Δ)^s of a full lattice field (evaluated everywhere, meaningful on ``mask``)."""
        mask = self.interior if mask is None else mask
        ubar = self.far_value(values) if far_value is None else far_value
        out = values * self._row_total - convolve(values, self.weights)
        out += self._far * (values - ubar)
        out += self._sing * self._second_difference(values, mask)
        return out

    def _second_difference(self, values, mask):
        """Σ_axes Σ_neighbours (U_i − U_j) over faces with both cells in ``mask``."""
        out = np.zeros_like(values)
        for ax in range(values.ndim):
            a = np.moveaxis(mask, ax, 0)
            face = a[1:] & a[:-1]
            v = np.moveaxis(values, ax, 0)
            flux = np.where(face, v[1:] - v[:-1], 0.0)
            o = np.moveaxis(out, ax, 0)
            o[:-1] -= flux
            o[1:] += flux
        return out

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Five-point (three-point in 1D) Laplacian with zero flux through boundary faces."""
        return -self._second_difference(values, self.interior) / self.lattice.dx**2

    def max_row_sum(self) -> float:
        """Gershgorin bound for the discrete fractional operator on interior cells."""
        diag = self._row_total + self._far + self._sing * 2 * self.lattice.n
        return float(2 * np.max(diag[self.interior]))

    def dt_max(self, coeffs: EffectiveCoefficients) -> float:
        lat = self.lattice
        rate = 2 * lat.n * coeffs.alpha / lat.dx**2 + coeffs.beta * self.max_row_sum()
        return math.inf if rate == 0 else 0.9 / rate

    def apply(self, values: np.ndarray, coeffs: EffectiveCoefficients, *, extended: bool = False) -> np.ndarray:
        """αΔU − β(−Δ)^s U on interior cells (zero elsewhere)."""
        rhs = np.zeros_like(values)
        if coeffs.alpha:
            rhs += coeffs.alpha * self.laplacian(values)
        if coeffs.beta:
            full = values if extended else self.extend(values)
            rhs -= coeffs.beta * self.fractional(full)
        return np.where(self.interior, rhs, 0.0)

    def dense_fractional(self) -> np.ndarray:
        """Matrix of U_Ω ↦ (−Δ)^s(extension of U_Ω) restricted to Ω."""
        idx = np.flatnonzero(self.interior)
        A = np.empty((idx.size, idx.size))
        for k, i in enumerate(idx):
            e = np.zeros(self.lattice.shape)
            e.flat[i] = 1.0
            A[:, k] = self.fractional(self.extend(e))[self.interior]
        return A

    def field(self, values: np.ndarray) -> GridField:
        full = self.extend(values)
        return GridField(self.lattice, full, self.interior, self.far_value(full), extended=True)


def make_operator(domain: Domain, dx: float, s: float, band: float = BAND_DIAMETERS) -> OperatorAssembly:
    return OperatorAssembly(domain, make_lattice(domain, dx, band), float(s))


# --------------------------------------------------------------------------
# public single-node operators


def fractional_laplacian(field: GridField, index, s: float) -> float:
    """Discrete (−Δ)^s at one cell, using every lattice value plus ``field.far_value`` beyond the box.

    The local correction pairs the cell with its axis neighbours inside ``field.interior``.
    """
    lat = field.lattice
    w = kernel_weights(lat, s)
    idx = tuple(np.atleast_1d(index))
    centre = tuple(m - 1 for m in lat.shape)
    sl = tuple(slice(c - i, c - i + m) for c, i, m in zip(centre, idx, lat.shape))
    wi = w[sl]
    U = field.values
    ui = U[idx]
    val = float(np.sum(wi * (ui - U)))
    val += float(far_mass(lat, s, lat.centers()[idx][None]).item()) * (ui - field.far_value)
    sing = singular_moment(lat.n, s, lat.dx) / (2 * lat.dx**2)
    for ax in range(lat.n):
        for step in (-1, 1):
            j = list(idx)
            j[ax] += step
            if 0 <= j[ax] < lat.shape[ax] and field.interior[tuple(j)]:
                val += sing * (ui - U[tuple(j)])
    return val


def classical_laplacian(field: GridField, index) -> float:
    """Second difference at one cell; neighbours outside the interior are mirrored ghosts."""
    lat = field.lattice
    idx = tuple(np.atleast_1d(index))
    U = field.values
    ui = U[idx]
    acc = 0.0
    for ax in range(lat.n):
        for step in (-1, 1):
            j = list(idx)
            j[ax] += step
            inside = 0 <= j[ax] < lat.shape[ax] and field.interior[tuple(j)]
            acc += (U[tuple(j)] if inside else ui) - ui
    return acc / lat.dx**2


# --------------------------------------------------------------------------
# time stepping


def step_time(field: GridField, dt: float, coeffs: EffectiveCoefficients, op: OperatorAssembly) -> GridField:
    """One explicit Euler step, then re-extension of the exterior band."""
    limit = op.dt_max(coeffs)
    if dt > limit * (1 + 1e-12):
        raise StabilityError(f"dt={dt:g} exceeds the stability bound {limit:g}")
    U = field.values if field.extended else op.extend(field.values)
    new = U + dt * op.apply(U, coeffs, extended=True)
    return op.field(new)


def point_mass(op: OperatorAssembly, x0) -> np.ndarray:
    """Unit mass at ``x0``, shared equally between cells when ``x0`` lies on cell faces."""
    lat = op.lattice
    x0 = np.atleast_1d(np.asarray(x0, float))
    rel = (x0 - np.array(lat.origin)) / lat.dx
    vals = np.zeros(lat.shape)
    choices = []
    for r in rel:
        k = math.floor(r)
        choices.append([k - 1, k] if abs(r - round(r)) < 1e-9 else [k])
    combos = np.array(np.meshgrid(*choices, indexing="ij")).reshape(lat.n, -1).T
    for c in combos:
        vals[tuple(c)] += 1.0 / len(combos)
    if not np.all(op.interior[vals > 0]):
        raise ValueError("point mass must sit inside the domain")
    return vals / lat.cell_volume


def snapshot_meta(op: OperatorAssembly, field: GridField, t: float, dt: float, steps: int) -> dict:
    return {
        "time": t,
        "steps": steps,
        "dt": dt,
        "mass": field.mass,
        "far_value": field.far_value,
        "nonlocal_residual_max": float(np.max(np.abs(op.nonlocal_residual(field.values)))),
        "local_residual_max": local_residual(op, field.values),
        "dx": op.lattice.dx,
        "shape": list(op.lattice.shape),
        "origin": list(op.lattice.origin),
        "interior_cells": int(op.interior.sum()),
    }


def local_residual(op: OperatorAssembly, values: np.ndarray) -> float:
    """Max one-sided normal difference |U_1 − U_0|/dx over boundary-adjacent interior cells."""
    best = 0.0
    dx = op.lattice.dx
    for ax in range(op.lattice.n):
        a = np.moveaxis(op.interior, ax, 0)
        v = np.moveaxis(values, ax, 0)
        # cell i interior, i-1 exterior, i+1 interior (and mirror)
        lo_edge = a[1:-1] & ~a[:-2] & a[2:]
        hi_edge = a[1:-1] & ~a[2:] & a[:-2]
        d_lo = np.abs(v[2:] - v[1:-1])[lo_edge]
        d_hi = np.abs(v[1:-1] - v[:-2])[hi_edge]
        for d in (d_lo, d_hi):
            if d.size:
                best = max(best, float(d.max()) / dx)
    return best


def solve(
    op: OperatorAssembly,
    coeffs: EffectiveCoefficients,
    initial: np.ndarray | Callable,
    times: Sequence[float],
    *,
    dt: float | None = None,
    callback: Callable[[GridField], None] | None = None,
) -> list[GridField]:
    """Integrate to each snapshot time; each interval uses equal steps no larger than ``dt``."""
    times = sorted(float(t) for t in times)
    if any(t < 0 for t in times):
        raise ValueError("snapshot times must be non-negative")
    if callable(initial):
        c = op.lattice.centers()[op.interior]
        U = np.zeros(op.lattice.shape)
        U[op.interior] = initial(c[:, 0] if op.lattice.n == 1 else c)
    else:
        U = np.where(op.interior, np.asarray(initial, float), 0.0)
    limit = op.dt_max(coeffs)
    dt_cap = limit if dt is None else min(dt, limit)
    field = op.field(U)
    t, steps, out = 0.0, 0, []
    skip_extension = coeffs.beta == 0
    for target in times:
        span = target - t
        k = 0 if span <= 0 else max(1, math.ceil(span / dt_cap - 1e-12))
        h = span / k if k else 0.0
        vals = field.values
        for _ in range(k):
            if skip_extension:
                vals = vals + h * coeffs.alpha * np.where(op.interior, op.laplacian(vals), 0.0)
            else:
                vals = vals + h * op.apply(vals, coeffs, extended=True)
                vals = op.extend(vals)
        steps += k
        t = target
        field = op.field(vals)
        field.meta = snapshot_meta(op, field, t, h, steps)
        out.append(field)
        if callback is not None:
            callback(field)
    return out
