"""Transition densities and samplers of the reflected walk/jump process.

The walk moves uniformly in a ball of radius ``lambda*h = h**s``; the jump
draws a power-law length larger than ``h``. A move that leaves the niche is
followed by exactly one re-entry drawn from the same law restricted to the
niche (uniform on the accessible ball for walks, the power law normalised by
``mu_h`` for jumps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .geometry import (
    Disk,
    Domain,
    GeometryError,
    Interval,
    REJECTION_CAP,
    Rectangle,
    _points,
    ball_intersection_volume,
    sample_uniform_in_intersection,
    unit_ball_volume,
    unit_sphere_area,
)
from .rng import as_batch

# random slot layout within one time step
SLOT_BRANCH = 0
SLOT_WALK = 1
SLOT_WALK_REENTRY = 100
SLOT_JUMP = 20_000
SLOT_JUMP_REENTRY = 20_001
JUMP_REJECTION_TRIES = 200
SLOT_JUMP_FALLBACK = 30_000
FALLBACK_CELLS = 512


@dataclass(frozen=True)
class ProcessParams:
    s: float
    p: float
    h: float

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"s={self.s} outside (0, 1)")
        if not 0 <= self.p <= 1:
            raise ValueError(f"p={self.p} outside [0, 1]")
        if not 0 < self.h < 1:
            raise ValueError(f"h={self.h} outside (0, 1)")

    @property
    def lam(self) -> float:
        return self.h ** (self.s - 1)

    @property
    def tau(self) -> float:
        return self.h ** (2 * self.s)

    @property
    def walk_radius(self) -> float:
        return self.h**self.s

    @property
    def lam_is_integer(self) -> bool:
        return abs(self.lam - round(self.lam)) <= 1e-9 * self.lam


@dataclass(frozen=True)
class EffectiveCoefficients:
    alpha: float
    beta: float
    c_o: float

    @classmethod
    def from_params(cls, params: ProcessParams, n: int) -> "EffectiveCoefficients":
        c_o = second_moment_unit_ball(n)
        alpha = (1 - params.p) * c_o / (2 * n * unit_ball_volume(n))
        beta = 2 * params.s * params.p / unit_sphere_area(n)
        return cls(alpha=float(alpha), beta=float(beta), c_o=float(c_o))


def second_moment_unit_ball(n: int) -> float:
    """∫_{B_1} |w|^2 dw."""
    return n * unit_ball_volume(n) / (n + 2)


# --------------------------------------------------------------------------
# Appendix measures (defined on all of R^n)


def pi_measure_density(params: ProcessParams, x, y, kind: str = "combined", n: int = 1):
    """Densities of d(pi_W), d(pi_J) and their mixture at separation ``x - y``.

    For ``n > 1`` the last axis of ``x``/``y`` holds coordinates.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.abs(x - y) if n == 1 else np.linalg.norm(x - y, axis=-1)
    r = params.walk_radius
    walk = np.where(d < r, 1.0 / (unit_ball_volume(n) * r**n), 0.0)
    jump = _jump_direct(params, n, d)
    if kind == "walk":
        out = walk
    elif kind == "jump":
        out = jump
    elif kind == "combined":
        out = params.p * jump + (1 - params.p) * walk
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# angular quadrature over rays, used for every 2D kernel mass


_GL = {k: leggauss(k) for k in (16, 24, 32, 48, 64, 96)}


def _gauss(a, b, k):
    """Gauss-Legendre nodes/weights on [a, b] (broadcast over leading axes)."""
    if k not in _GL:
        _GL[k] = leggauss(k)
    t, w = _GL[k]
    a = np.asarray(a, float)[..., None]
    b = np.asarray(b, float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (t + 1), half * w


def _circle_crossings(domain: Domain, z: np.ndarray, r: float) -> np.ndarray:
    """Angles (about ``z``) where the circle of radius ``r`` meets the boundary; NaN padded."""
    if isinstance(domain, Rectangle):
        lo, hi = domain.bounds
        out = []
        for axis in (0, 1):
            other = 1 - axis
            for level in (lo[axis], hi[axis]):
                d = level - z[:, axis]
                with np.errstate(invalid="ignore"):
                    c = np.sqrt(r * r - d * d)
                for sign in (-1.0, 1.0):
                    q = z[:, other] + sign * c
                    ok = (q >= lo[other]) & (q <= hi[other]) & np.isfinite(c)
                    v = np.empty((len(z), 2))
                    v[:, axis] = d
                    v[:, other] = sign * c
                    out.append(np.where(ok, np.arctan2(v[:, 1], v[:, 0]), np.nan))
        return np.stack(out, axis=1)
    rel = np.array(domain.center) - z
    D = np.linalg.norm(rel, axis=1)
    R = domain.radius
    with np.errstate(invalid="ignore"):
        gamma = np.arccos((D * D + r * r - R * R) / (2 * D * r))
    base = np.arctan2(rel[:, 1], rel[:, 0])
    return np.stack([base - gamma, base + gamma], axis=1)


def _angle_nodes_outside(domain: Domain, z: np.ndarray, k: int = 48, h: float | None = None):
    """Directions from exterior points ``z`` (m, 2) that hit the domain.

    Pieces are split at corners and, when ``h`` is given, where the circle of
    radius ``h`` about ``z`` crosses the boundary (kinks of the ray masses).
    """
    if isinstance(domain, Rectangle):
        lo, hi = domain.bounds
        centre = 0.5 * (lo + hi)
        base = np.arctan2(centre[1] - z[:, 1], centre[0] - z[:, 0])
        rel = domain.corners[None, :, :] - z[:, None, :]
        ang = np.arctan2(rel[..., 1], rel[..., 0]) - base[:, None]
        ang = (ang + np.pi) % (2 * np.pi) - np.pi
        a0 = ang.min(axis=1, keepdims=True)
        a1 = ang.max(axis=1, keepdims=True)
        brk = ang
        if h is not None:
            cr = _circle_crossings(domain, z, h) - base[:, None]
            cr = (cr + np.pi) % (2 * np.pi) - np.pi
            brk = np.concatenate([ang, np.clip(np.where(np.isfinite(cr), cr, a1), a0, a1)], axis=1)
        brk = np.sort(brk, axis=1) + base[:, None]
        phis, ws = [], []
        for j in range(brk.shape[1] - 1):
            p, w = _gauss(brk[:, j], brk[:, j + 1], k)
            phis.append(p)
            ws.append(w)
        return np.concatenate(phis, axis=1), np.concatenate(ws, axis=1)
    if isinstance(domain, Disk):
        rel = np.array(domain.center) - z
        D = np.linalg.norm(rel, axis=1)
        base = np.arctan2(rel[:, 1], rel[:, 0])
        smax = domain.radius / D
        # psi = asin(smax * sin(theta)) removes the square-root behaviour at tangent rays
        edges = [np.full(len(z), -0.5 * np.pi), np.full(len(z), 0.5 * np.pi)]
        if h is not None:
            g = _circle_crossings(domain, z, h)[:, 1] - base
            g = (g + np.pi) % (2 * np.pi) - np.pi
            th = np.arcsin(np.clip(np.sin(np.abs(g)) / smax, 0.0, 1.0))
            th = np.where(np.isfinite(g), th, 0.5 * np.pi)
            edges = [edges[0], -th, th, edges[1]]
        phis, ws = [], []
        for a_, b_ in zip(edges[:-1], edges[1:]):
            t, w = _gauss(a_, b_, k)
            sinpsi = smax[:, None] * np.sin(t)
            psi = np.arcsin(sinpsi)
            jac = smax[:, None] * np.cos(t) / np.sqrt(1 - sinpsi**2)
            phis.append(base[:, None] + psi)
            ws.append(w * jac)
        return np.concatenate(phis, axis=1), np.concatenate(ws, axis=1)
    raise TypeError(f"no 2D angular quadrature for {type(domain).__name__}")


def _angle_nodes_inside(domain: Domain, x: np.ndarray, k: int = 48, r: float | None = None, grade: int = 0):
    """Full circle of directions from interior points.

    Split at corner angles and, when ``r`` is given, where the circle of radius
    ``r`` about ``x`` crosses the boundary. ``grade`` > 0 further splits every
    piece geometrically towards both ends (near-tangent rays of points close
    to the boundary).
    """
    brk = [np.zeros((len(x), 0))]
    if isinstance(domain, Rectangle):
        rel = domain.corners[None, :, :] - x[:, None, :]
        brk.append(np.arctan2(rel[..., 1], rel[..., 0]))
    if r is not None:
        brk.append(_circle_crossings(domain, x, r))
    brk = np.concatenate(brk, axis=1)
    if brk.shape[1] == 0:
        m = 4 * k
        phi = np.broadcast_to(2 * np.pi * np.arange(m) / m, (len(x), m))
        return phi, np.full((len(x), m), 2 * np.pi / m)
    brk = np.where(np.isfinite(brk), brk, np.nan)
    # rows without any finite break (circle clear of the boundary) start at 0
    live = np.isfinite(brk).any(axis=1, keepdims=True)
    first = np.where(live, np.nanmin(np.where(live, brk, 0.0), axis=1, keepdims=True), 0.0)
    brk = np.where(np.isfinite(brk), brk, first)
    brk = np.sort((brk - first) % (2 * np.pi), axis=1) + first
    edges = np.concatenate([brk, first + 2 * np.pi], axis=1)
    if grade:
        frac = np.concatenate([[0.0], 2.0 ** -np.arange(grade, 0, -1), 1 - 2.0 ** -np.arange(2, grade + 1)])
        a_, b_ = edges[:, :-1, None], edges[:, 1:, None]
        edges = np.concatenate([(a_ + (b_ - a_) * frac).reshape(len(x), -1), edges[:, -1:]], axis=1)
    phis, ws = [], []
    for j in range(edges.shape[1] - 1):
        p, w = _gauss(edges[:, j], edges[:, j + 1], k)
        phis.append(p)
        ws.append(w)
    return np.concatenate(phis, axis=1), np.concatenate(ws, axis=1)


def _rays(domain, o, phi):
    e = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    t_in, t_out = domain.ray_intersection(np.broadcast_to(o[:, None, :], e.shape), e)
    return t_in, t_out


def _power_mass(lo, hi, s):
    """2s ∫_lo^hi r^{-1-2s} dr for 0 < lo <= hi, evaluated stably."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(hi / lo)
        val = lo ** (-2 * s) * -np.expm1(-2 * s * ratio)
    return np.where(hi > lo, val, 0.0)


# --------------------------------------------------------------------------
# walk kernel


def _walk_reflected_1d(domain: Interval, r: float, x, y):
    """Closed form of the exterior integral in the walk density on an interval."""
    a, b = domain.a, domain.b
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))

    def right_edge(m):
        # z = b + t, 0 <= t < L; |Omega ∩ B_r(z)| = b - a for t <= t_s, r - t beyond
        L = np.clip(m + r - b, 0.0, None)
        t_s = np.clip(a + r - b, 0.0, None)
        flat = np.minimum(L, t_s) / (b - a)
        t0 = np.minimum(L, t_s)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(L > t0, np.log((r - t0) / (b - m)), 0.0)
        return (flat + tail) / (2 * r)

    return right_edge(np.minimum(x, y)) + right_edge(a + b - np.maximum(x, y))


def walk_density(params: ProcessParams, domain: Domain, x, y):
    """Density of one walk step (direct + reflected) from ``x`` to ``y``."""
    r = params.walk_radius
    if domain.n == 1:
        xa = np.asarray(x, float)
        ya = np.asarray(y, float)
        if not (np.all(domain.contains(xa)) and np.all(domain.contains(ya))):
            raise ValueError("walk_density needs x, y inside the domain")
        direct = np.where(np.abs(xa - ya) < r, 1.0 / (2 * r), 0.0)
        out = direct + _walk_reflected_1d(domain, r, xa, ya)
        return float(out) if np.ndim(out) == 0 else out
    x = _points(x, 2)
    y = _points(y, 2)
    if x.ndim > 1 or y.ndim > 1:
        xs, ys = np.broadcast_arrays(x, y)
        return np.array([walk_density(params, domain, a, b) for a, b in zip(xs.reshape(-1, 2), ys.reshape(-1, 2))]).reshape(xs.shape[:-1])
    if not (domain.contains(x) and domain.contains(y)):
        raise ValueError("walk_density needs x, y inside the domain")
    vol_b = unit_ball_volume(2) * r * r
    direct = 1.0 / vol_b if np.linalg.norm(x - y) < r else 0.0
    return direct + _walk_reflected_2d(domain, r, x, y) / vol_b


def _walk_reflected_2d(domain, r, x, y):
    m = 0.5 * (x + y)
    half = 0.5 * (y - x)
    dd = half @ half
    if dd >= r * r:
        return 0.0
    tnodes, twts = _GL[24]

    def inner(phi):
        e = np.array([math.cos(phi), math.sin(phi)])
        g = abs(e @ half)
        q = math.sqrt(g * g - dd + r * r)
        upper = q - g
        _, t_out = domain.ray_intersection(m, e)
        lower = float(t_out)
        if upper <= lower:
            return 0.0
        rho = lower + 0.5 * (upper - lower) * (tnodes + 1)
        z = m + rho[:, None] * e
        A = ball_intersection_volume(domain, z, r)
        return 0.5 * (upper - lower) * np.sum(twts * rho / A)

    pts = _corner_angles(domain, m)
    val, _ = integrate.quad(inner, 0.0, 2 * np.pi, points=pts, limit=200, epsabs=1e-13, epsrel=1e-11)
    return val


def _corner_angles(domain, o):
    if isinstance(domain, Rectangle):
        rel = domain.corners - o
        return np.sort(np.arctan2(rel[:, 1], rel[:, 0]) % (2 * np.pi))
    return None


# --------------------------------------------------------------------------
# jump kernel


def jump_reentry_weight(params: ProcessParams, domain: Domain, z):
    """mu_h(z) = 2s h^{2s} ∫_{Omega minus B_h(z)} |y - z|^{-n-2s} dy for exterior ``z``."""
    s, h = params.s, params.h
    if domain.n == 1:
        za = np.asarray(z, float)
        if np.any(domain.contains(za)):
            raise ValueError("mu_h is defined for exterior points only")
        right = za >= domain.b
        near = np.where(right, za - domain.b, domain.a - za)
        far = np.where(right, za - domain.a, domain.b - za)
        out = h ** (2 * s) * _power_mass(np.maximum(near, h), far, s)
        return float(out) if np.ndim(out) == 0 else out
    zz = np.atleast_2d(_points(z, 2))
    if np.any(domain.contains(zz)):
        raise ValueError("mu_h is defined for exterior points only")
    out = _mu_2d(domain, zz, s, h)
    return float(out[0]) if np.ndim(z) == 1 else out


def _mu_2d(domain, z, s, h, k=64):
    phi, w = _angle_nodes_outside(domain, z, k, h=h)
    t_in, t_out = _rays(domain, z, phi)
    t_in = np.where(np.isfinite(t_in), t_in, 0.0)
    t_out = np.where(np.isfinite(t_out), t_out, 0.0)
    lo = np.maximum(np.maximum(t_in, 0.0), h)
    mass = _power_mass(lo, np.maximum(t_out, lo), s)
    return h ** (2 * s) * np.sum(w * mass, axis=1)


def _jump_direct(params, n, d):
    with np.errstate(divide="ignore"):
        return np.where(
            d > params.h,
            2 * params.s * params.h ** (2 * params.s) / (unit_sphere_area(n) * d ** (n + 2 * params.s)),
            0.0,
        )


def jump_density(params: ProcessParams, domain: Domain, x, y, *, reflected: bool = True):
    """Density of one jump step (direct + reflected) from ``x`` to ``y``."""
    if domain.n == 1:
        xa = np.asarray(x, float)
        ya = np.asarray(y, float)
        if not (np.all(domain.contains(xa)) and np.all(domain.contains(ya))):
            raise ValueError("jump_density needs x, y inside the domain")
        direct = _jump_direct(params, 1, np.abs(xa - ya))
        if not reflected:
            return float(direct) if np.ndim(direct) == 0 else direct
        refl = _jump_reflected_1d(params, domain, xa, ya)
        out = direct + refl
        return float(out) if np.ndim(out) == 0 else out
    x = _points(x, 2)
    y = _points(y, 2)
    if x.ndim > 1 or y.ndim > 1:
        xs, ys = np.broadcast_arrays(x, y)
        return np.array(
            [jump_density(params, domain, a, b, reflected=reflected) for a, b in zip(xs.reshape(-1, 2), ys.reshape(-1, 2))]
        ).reshape(xs.shape[:-1])
    if not (domain.contains(x) and domain.contains(y)):
        raise ValueError("jump_density needs x, y inside the domain")
    direct = float(_jump_direct(params, 2, np.linalg.norm(x - y)))
    if not reflected:
        return direct
    return direct + _jump_reflected_2d(params, domain, x, y)


def _jump_reflected_1d(params, domain: Interval, x, y, panel: float = 0.25, far: float = 1e9):
    """Exterior integral of the reflected jump density on an interval (vectorised over x, y).

    Composite Gauss-Legendre in w = log(t + delta), t the distance beyond the
    exit edge, with an asymptotic tail beyond ``far * span``.
    """
    s, h = params.s, params.h
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    shape = x.shape
    x, y = x.reshape(-1, 1), y.reshape(-1, 1)
    if len(x) > 512:
        parts = [_jump_reflected_1d(params, domain, x[i : i + 512, 0], y[i : i + 512, 0], panel, far) for i in range(0, len(x), 512)]
        return np.concatenate(parts).reshape(shape)
    span = domain.b - domain.a
    pref = (2 * s) ** 2 * h ** (4 * s) / 2.0
    T = far * span
    tg, wg = _GL[16]
    total = np.zeros(len(x))
    for gx, gy in ((domain.b - x, domain.b - y), (x - domain.a, y - domain.a)):
        # gx, gy: distances of x, y to the exit edge
        cut = np.maximum(np.maximum(h - gx, h - gy), 0.0)
        delta = np.minimum(gx, gy)
        w0 = np.log(cut + delta)
        wh = np.log(np.maximum(h, cut) + delta)
        w1 = np.log(T + delta)
        nodes, weights = [], []
        for lo, hi in ((w0, wh), (wh, w1)):
            k = max(1, int(np.ceil(np.max(hi - lo) / panel)))
            e = lo + (hi - lo) * np.linspace(0.0, 1.0, k + 1)[None, :]
            half = 0.5 * np.diff(e, axis=1)
            nodes.append((e[:, :-1, None] + half[..., None] * (tg + 1)).reshape(len(x), -1))
            weights.append((half[..., None] * wg).reshape(len(x), -1))
        w = np.concatenate(nodes, axis=1)
        wt = np.concatenate(weights, axis=1)
        t = np.exp(w) - delta
        mu = h ** (2 * s) * _power_mass(np.maximum(t, h), t + span, s)
        f = pref / (mu * ((t + gx) * (t + gy)) ** (1 + 2 * s))
        total += np.sum(wt * f * (t + delta), axis=1)
        # beyond T: f ~ pref / (2s span h^{2s}) t^{-1-2s}
        total += pref / (2 * s * span * h ** (2 * s)) * T ** (-2 * s) / (2 * s)
    return total.reshape(shape)


def _jump_reflected_2d(params, domain, x, y, k=24):
    """Reflected jump term by polar quadrature about the midpoint of x and y.

    Fixed Gauss rule in the angle (split at every known kink) and in the mapped
    radius; relative accuracy ~1e-4 for points within h of a corner, far better
    elsewhere. The rule is mirror-symmetric in (x, y).
    """
    s, h = params.s, params.h
    pref = (2 * s) ** 2 * h ** (4 * s) / unit_sphere_area(2)
    m = 0.5 * (x + y)
    half = 0.5 * (y - x)
    hd = half @ half
    t, wt = _GL[k]

    def excluded(e, g):
        # rho-interval with |m + rho e -/+ half| <= h  (g = e·half, sign handled by caller)
        disc = g * g - hd + h * h
        if disc <= 0:
            return None
        q = math.sqrt(disc)
        return (g - q, g + q)

    def inner(phi):
        e = np.array([math.cos(phi), math.sin(phi)])
        _, t_out = domain.ray_intersection(m, e)
        start = float(t_out)
        g = float(e @ half)
        cuts = [iv for iv in (excluded(e, g), excluded(e, -g)) if iv is not None]
        # breakpoints on the mapped variable v in (0, 1): rho = start * (1 - v)^(-1/(2s))
        segs = [(start, np.inf)]
        for a_, b_ in cuts:
            new = []
            for lo_, hi_ in segs:
                if b_ <= lo_ or a_ >= hi_:
                    new.append((lo_, hi_))
                    continue
                if a_ > lo_:
                    new.append((lo_, a_))
                if b_ < hi_:
                    new.append((b_, hi_))
            segs = new
        total = 0.0
        for lo_, hi_ in segs:
            v_lo = 1 - (start / lo_) ** (2 * s)
            v_hi = 1.0 if not np.isfinite(hi_) else 1 - (start / hi_) ** (2 * s)
            if v_hi <= v_lo:
                continue
            v = v_lo + 0.5 * (v_hi - v_lo) * (t + 1)
            rho = start * (1 - v) ** (-1 / (2 * s))
            drho = rho / (2 * s * (1 - v))
            z = m + rho[:, None] * e
            dx = np.linalg.norm(z - x, axis=1)
            dy = np.linalg.norm(z - y, axis=1)
            mu = _mu_2d(domain, z, s, h)
            val = pref / (mu * (dx * dy) ** (2 + 2 * s)) * rho * drho
            total += 0.5 * (v_hi - v_lo) * np.sum(wt * val)
        return total

    # kinks in phi: corners, tangents to the h-circles about x and y, and
    # directions of the points where those circles cross the boundary
    brk = [np.zeros(0)] if _corner_angles(domain, m) is None else [_corner_angles(domain, m)]
    if hd > h * h:
        base = math.atan2(half[1], half[0])
        gam = math.acos(math.sqrt(hd - h * h) / math.sqrt(hd))
        brk.append(np.array([base + gam, base - gam, base + math.pi + gam, base + math.pi - gam]))
    for c in (x, y):
        cr = _circle_crossings(domain, c[None, :], h)[0]
        cr = cr[np.isfinite(cr)]
        p = c + h * np.stack([np.cos(cr), np.sin(cr)], axis=1)
        brk.append(np.arctan2(p[:, 1] - m[1], p[:, 0] - m[0]))
    brk = np.unique(np.concatenate(brk) % (2 * np.pi))
    edges = np.concatenate([brk, [brk[0] + 2 * np.pi]]) if brk.size else np.linspace(0, 2 * np.pi, 9)
    phis, ws = _gauss(edges[:-1], edges[1:], k)
    return float(sum(w * inner(p) for p, w in zip(phis.ravel(), ws.ravel())))


def combined_density(params: ProcessParams, domain: Domain, x, y):
    out = 0.0
    if params.p > 0:
        out = out + params.p * np.asarray(jump_density(params, domain, x, y))
    if params.p < 1:
        out = out + (1 - params.p) * np.asarray(walk_density(params, domain, x, y))
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# samplers


def sample_power_law_radius(h: float, s: float, rng=None, size=None, u=None):
    """Radius with density 2s h^{2s} r^{-1-2s} on (h, inf), by inverse CDF."""
    if u is None:
        if rng is None:
            raise ValueError("need rng or u")
        m = 1 if size is None else int(size)
        u = as_batch(rng, m).uniform(SLOT_JUMP)[:, 0]
        if size is None:
            u = u[0]
    u = np.asarray(u, float)
    out = h * (1.0 - u) ** (-1.0 / (2 * s))
    return float(out) if np.ndim(out) == 0 else out


def _uniform_ball(u, n, r):
    if n == 1:
        return (r * (2 * u[:, 0] - 1))[:, None]
    rad = r * np.sqrt(u[:, 0])
    ang = 2 * np.pi * u[:, 1]
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)


def _as_rows(x, n):
    scalar = np.ndim(x) == 0 if n == 1 else np.ndim(x) == 1
    x = _points(x, n)
    return x.reshape(-1, n), scalar


def sample_walk_step(params: ProcessParams, domain: Domain, x, rng):
    """One walk step per row of ``x``; exits re-enter uniformly on Omega ∩ B(z)."""
    n = domain.n
    xs, scalar = _as_rows(x, n)
    batch = as_batch(rng, len(xs))
    r = params.walk_radius
    y = xs + _uniform_ball(batch.uniform(SLOT_WALK), n, r)
    out = ~domain.contains(y)
    if np.any(out):
        y[out] = np.reshape(sample_uniform_in_intersection(domain, y[out], r, batch.subset(out), SLOT_WALK_REENTRY), (-1, n))
    return _finish(y, scalar, n)


def _finish(y, scalar, n):
    if scalar:
        return float(y[0, 0]) if n == 1 else y[0]
    return y[:, 0] if n == 1 else y


def sample_jump_step(params: ProcessParams, domain: Domain, x, rng):
    """One jump step per row of ``x``; exits re-enter by the normalised power law."""
    n = domain.n
    xs, scalar = _as_rows(x, n)
    batch = as_batch(rng, len(xs))
    u = batch.uniform(SLOT_JUMP)
    rho = params.h * (1.0 - u[:, 0]) ** (-1.0 / (2 * params.s))
    if n == 1:
        step = np.where(u[:, 1] < 0.5, -rho, rho)[:, None]
    else:
        ang = 2 * np.pi * u[:, 1]
        step = rho[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    y = xs + step
    out = ~domain.contains(y)
    if np.any(out):
        y[out] = np.reshape(jump_reentry(params, domain, y[out], batch.subset(out)), (-1, n))
    return _finish(y, scalar, n)


def jump_reentry(params: ProcessParams, domain: Domain, z, rng):
    """Re-entry point from exterior ``z`` with density ∝ |y-z|^{-n-2s} on Omega minus B_h(z)."""
    n = domain.n
    zs, scalar = _as_rows(z, n)
    batch = as_batch(rng, len(zs))
    if n == 1:
        y = _reentry_1d(params, domain, zs[:, 0], batch.uniform(SLOT_JUMP_REENTRY)[:, 0])[:, None]
    else:
        y = _reentry_2d(params, domain, zs, batch)
    return _finish(y, scalar, n)


def _reentry_1d(params, domain: Interval, z, u):
    s, h = params.s, params.h
    a, b = domain.a, domain.b
    right = z >= b
    gap = np.where(right, z - b, a - z)
    far = gap + (b - a)
    if np.any(far <= h):
        raise GeometryError("domain lies inside B_h(z); re-entry law undefined")
    lo = np.maximum(gap, h)
    c = -np.expm1(-2 * s * np.log(far / lo))
    # distance from z, relative to lo, then converted to depth inside the niche
    grow = np.expm1(-np.log1p(-u * c) / (2 * s))
    depth = np.where(gap >= h, gap * grow, lo * (1 + grow) - gap)
    depth = np.clip(depth, 0.0, b - a)
    y = np.where(right, b - depth, a + depth)
    # endpoints map to the open interval only up to rounding
    y = np.where(domain.contains(y), y, np.where(right, np.nextafter(b, a), np.nextafter(a, b)))
    return y


def _reentry_2d(params, domain, z, batch):
    s, h = params.s, params.h
    out = np.empty_like(z)
    pending = np.arange(len(z))
    for attempt in range(JUMP_REJECTION_TRIES):
        if not len(pending):
            return out
        u = batch.uniform(SLOT_JUMP_REENTRY + attempt)
        rho = h * (1.0 - u[:, 0]) ** (-1.0 / (2 * s))
        ang = 2 * np.pi * u[:, 1]
        y = z[pending] + rho[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        ok = domain.contains(y)
        out[pending[ok]] = y[ok]
        pending = pending[~ok]
        batch = batch.subset(~ok)
    if len(pending):
        out[pending] = _reentry_fallback(params, domain, z[pending], batch)
    return out


def _cell_partition(domain: Domain):
    """512 cells covering the domain: (sampler(u, idx) -> points, quad nodes, quad weights, cell radius info)."""
    if isinstance(domain, Rectangle):
        lo, hi = domain.bounds
        nx, ny = 16, 32
        if hi[0] - lo[0] > hi[1] - lo[1]:
            nx, ny = ny, nx
        ex = np.linspace(lo[0], hi[0], nx + 1)
        ey = np.linspace(lo[1], hi[1], ny + 1)
        X0, Y0 = np.meshgrid(ex[:-1], ey[:-1], indexing="ij")
        c_lo = np.stack([X0.ravel(), Y0.ravel()], axis=1)
        size = np.array([ex[1] - ex[0], ey[1] - ey[0]])
        c_hi = c_lo + size

        def place(u, idx):
            return c_lo[idx] + u * size

        return place, c_lo, c_hi, np.full(len(c_lo), size[0] * size[1])
    if isinstance(domain, Disk):
        nr, nt = 16, 32
        R = domain.radius
        redges = R * np.sqrt(np.arange(nr + 1) / nr)
        tedges = 2 * np.pi * np.arange(nt + 1) / nt
        I, J = np.meshgrid(np.arange(nr), np.arange(nt), indexing="ij")
        r0, r1 = redges[I.ravel()], redges[I.ravel() + 1]
        t0, t1 = tedges[J.ravel()], tedges[J.ravel() + 1]
        c = np.array(domain.center)

        def place(u, idx):
            rr = np.sqrt(r0[idx] ** 2 + u[:, 0] * (r1[idx] ** 2 - r0[idx] ** 2))
            tt = t0[idx] + u[:, 1] * (t1[idx] - t0[idx])
            return c + np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=1)

        return place, np.stack([r0, t0], 1), np.stack([r1, t1], 1), 0.5 * (r1**2 - r0**2) * (t1 - t0)
    raise TypeError(f"no cell partition for {type(domain).__name__}")


def _cell_quadrature(domain, z, s, h, k=4):
    """Per-cell ∫ |y-z|^{-2-2s} χ(|y-z|>h) dy (tensor Gauss in cell coordinates) and lower distance bounds."""
    place, c0, c1, area = _cell_partition(domain)
    t, w = leggauss(k)
    uu = 0.5 * (t + 1)
    U1, U2 = np.meshgrid(uu, uu, indexing="ij")
    W = np.outer(w, w).ravel() / 4.0
    nodes = np.stack([U1.ravel(), U2.ravel()], axis=1)
    ncell = len(area)
    pts = np.stack([place(np.broadcast_to(nd, (ncell, 2)), np.arange(ncell)) for nd in nodes], axis=1)
    d = np.linalg.norm(pts[None] - z[:, None, None, :], axis=-1)
    with np.errstate(divide="ignore"):
        kern = np.where(d > h, d ** (-2 - 2 * s), 0.0)
    weights = area[None, :] * np.sum(kern * W, axis=-1)
    if isinstance(domain, Rectangle):
        gap = np.maximum(0.0, np.maximum(c0[None] - z[:, None], z[:, None] - c1[None]))
        dmin = np.linalg.norm(gap, axis=-1)
    else:
        dmin = np.clip(np.linalg.norm(z - np.array(domain.center), axis=1)[:, None] - c1[None, :, 0], 0.0, None)
    return place, weights, np.maximum(dmin, h)


def reentry_mass_cells(params: ProcessParams, domain: Domain, z) -> np.ndarray:
    """mu_h(z) by the 512-cell tensor quadrature (independent of the angular route)."""
    zz = np.atleast_2d(_points(z, domain.n))
    _, weights, _ = _cell_quadrature(domain, zz, params.s, params.h)
    return 2 * params.s * params.h ** (2 * params.s) * weights.sum(axis=1)


def _reentry_fallback(params, domain, z, batch):
    """Exact sampler: pick a cell by its envelope mass area * dmin^{-2-2s}, then accept in-cell."""
    s, h = params.s, params.h
    place, weights, dmin = _cell_quadrature(domain, z, s, h)
    _, _, _, area = _cell_partition(domain)
    envelope = area[None, :] * dmin ** (-2 - 2 * s)
    if np.any(weights.sum(axis=1) <= 0):
        raise GeometryError("mu_h(z) = 0; re-entry law undefined")
    cdf = np.cumsum(envelope, axis=1)
    cdf /= cdf[:, -1:]
    out = np.empty_like(z)
    pending = np.arange(len(z))
    for attempt in range(REJECTION_CAP):
        if not len(pending):
            return out
        u = batch.uniform(SLOT_JUMP_FALLBACK + 2 * attempt)
        v = batch.uniform(SLOT_JUMP_FALLBACK + 2 * attempt + 1)
        idx = np.array([np.searchsorted(cdf[p], u[i, 0], side="right") for i, p in enumerate(pending)], dtype=int)
        idx = np.minimum(idx, cdf.shape[1] - 1)
        y = place(v, idx)
        d = np.linalg.norm(y - z[pending], axis=1)
        bound = dmin[pending, idx] ** (-2 - 2 * s)
        with np.errstate(divide="ignore"):
            ok = (d > h) & (u[:, 1] * bound < d ** (-2 - 2 * s)) & domain.contains(y)
        out[pending[ok]] = y[ok]
        pending = pending[~ok]
        batch = batch.subset(~ok)
    raise GeometryError(f"re-entry fallback exceeded {REJECTION_CAP} tries")
