"""Niche shapes and the geometric measures the transition kernels need.

Shapes are immutable; all point arguments are arrays whose last axis is the
spatial dimension (a bare float is accepted for 1D). Membership uses the open
set, so boundary points are *not* contained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gamma

from .rng import as_batch

REJECTION_CAP = 10_000
BOUNDARY_TOL = 1e-9


class GeometryError(RuntimeError):
    """Degenerate geometry, e.g. an empty ball intersection during sampling."""


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / gamma(n / 2 + 1)


def unit_sphere_area(n: int) -> float:
    """Hausdorff measure of the unit sphere in R^n (2 for n=1)."""
    return n * unit_ball_volume(n)


def _points(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise ValueError(f"point has dimension {x.shape[-1]}, domain has dimension {n}")
    return x


class Domain:
    n: int

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def _ball_volume(self, c: np.ndarray, r) -> np.ndarray:
        raise NotImplementedError

    def _proposal_box(self, c: np.ndarray, r: np.ndarray):
        """Axis frame + box enclosing Omega ∩ B_r(c), used for rejection sampling."""
        raise NotImplementedError


@dataclass(frozen=True)
class Interval(Domain):
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("Interval needs a < b")

    n = 1

    @property
    def volume(self) -> float:
        return self.b - self.a

    @property
    def diameter(self) -> float:
        return self.b - self.a

    @property
    def bounds(self):
        return np.array([self.a]), np.array([self.b])

    def contains(self, x):
        x = _points(x, 1)[..., 0]
        return (x > self.a) & (x < self.b)

    def distance_to_boundary(self, x):
        x = _points(x, 1)[..., 0]
        return np.minimum(np.abs(x - self.a), np.abs(x - self.b))

    def outward_normal(self, x):
        x = float(_points(x, 1).reshape(-1)[0])
        if abs(x - self.b) <= BOUNDARY_TOL:
            return np.array([1.0])
        if abs(x - self.a) <= BOUNDARY_TOL:
            return np.array([-1.0])
        raise GeometryError(f"{x} is not on the boundary of {self}")

    def ray_intersection(self, o, e):
        o = _points(o, 1)[..., 0]
        e = _points(e, 1)[..., 0]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t1 = (self.a - o) / e
            t2 = (self.b - o) / e
        return np.minimum(t1, t2), np.maximum(t1, t2)

    def _ball_volume(self, c, r):
        c = c[..., 0]
        return np.clip(np.minimum(self.b, c + r) - np.maximum(self.a, c - r), 0.0, None)

    def _proposal_box(self, c, r):
        lo = np.maximum(self.a, c[..., 0] - r)
        hi = np.minimum(self.b, c[..., 0] + r)
        return None, lo[:, None], hi[:, None]


@dataclass(frozen=True)
class Rectangle(Domain):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 2 or len(hi) != 2:
            raise ValueError("Rectangle is two-dimensional")
        if not all(l < h for l, h in zip(lo, hi)):
            raise ValueError("Rectangle needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    n = 2

    @property
    def volume(self) -> float:
        return (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])

    @property
    def diameter(self) -> float:
        return math.hypot(self.hi[0] - self.lo[0], self.hi[1] - self.lo[1])

    @property
    def bounds(self):
        return np.array(self.lo), np.array(self.hi)

    @property
    def corners(self) -> np.ndarray:
        (x0, y0), (x1, y1) = self.lo, self.hi
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def contains(self, x):
        x = _points(x, 2)
        lo, hi = self.bounds
        return np.all((x > lo) & (x < hi), axis=-1)

    def distance_to_boundary(self, x):
        x = _points(x, 2)
        lo, hi = self.bounds
        inside = np.minimum(np.min(x - lo, axis=-1), np.min(hi - x, axis=-1))
        outside = np.linalg.norm(np.maximum(0.0, np.maximum(lo - x, x - hi)), axis=-1)
        return np.where(inside >= 0, inside, outside)

    def outward_normal(self, x):
        x = _points(x, 2).reshape(2)
        lo, hi = self.bounds
        if not (np.all(x >= lo - BOUNDARY_TOL) and np.all(x <= hi + BOUNDARY_TOL)):
            raise GeometryError(f"{x} is not on the boundary of {self}")
        nu = np.zeros(2)
        for k in range(2):
            if abs(x[k] - hi[k]) <= BOUNDARY_TOL:
                nu[k] += 1.0
            elif abs(x[k] - lo[k]) <= BOUNDARY_TOL:
                nu[k] -= 1.0
        if not nu.any():
            raise GeometryError(f"{x} is not on the boundary of {self}")
        return nu / np.linalg.norm(nu)

    def ray_intersection(self, o, e):
        o = _points(o, 2)
        e = _points(e, 2)
        lo, hi = self.bounds
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t1 = (lo - o) / e
            t2 = (hi - o) / e
        tmin = np.where(e == 0, np.where((o > lo) & (o < hi), -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(e == 0, np.where((o > lo) & (o < hi), np.inf, -np.inf), np.maximum(t1, t2))
        return np.max(tmin, axis=-1), np.min(tmax, axis=-1)

    def _ball_volume(self, c, r):
        (x0, y0), (x1, y1) = self.lo, self.hi
        cx, cy = c[..., 0], c[..., 1]
        return (
            _disk_quadrant_area(x1 - cx, y1 - cy, r)
            - _disk_quadrant_area(x0 - cx, y1 - cy, r)
            - _disk_quadrant_area(x1 - cx, y0 - cy, r)
            + _disk_quadrant_area(x0 - cx, y0 - cy, r)
        )

    def _proposal_box(self, c, r):
        lo, hi = self.bounds
        return None, np.maximum(lo, c - r[:, None]), np.minimum(hi, c + r[:, None])


@dataclass(frozen=True)
class Disk(Domain):
    center: tuple
    radius: float

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        if len(center) != 2:
            raise ValueError("Disk is two-dimensional")
        if not self.radius > 0:
            raise ValueError("Disk needs radius > 0")
        object.__setattr__(self, "center", center)

    n = 2

    @property
    def volume(self) -> float:
        return math.pi * self.radius**2

    @property
    def diameter(self) -> float:
        return 2 * self.radius

    @property
    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, x):
        x = _points(x, 2)
        return np.linalg.norm(x - np.array(self.center), axis=-1) < self.radius

    def distance_to_boundary(self, x):
        x = _points(x, 2)
        return np.abs(np.linalg.norm(x - np.array(self.center), axis=-1) - self.radius)

    def outward_normal(self, x):
        d = _points(x, 2).reshape(2) - np.array(self.center)
        rho = np.linalg.norm(d)
        if abs(rho - self.radius) > BOUNDARY_TOL:
            raise GeometryError(f"{x} is not on the boundary of {self}")
        return d / rho

    def ray_intersection(self, o, e):
        d = _points(o, 2) - np.array(self.center)
        e = _points(e, 2)
        ee = np.sum(e * e, axis=-1)
        b = np.sum(d * e, axis=-1) / ee
        q = b * b - (np.sum(d * d, axis=-1) - self.radius**2) / ee
        root = np.sqrt(np.where(q > 0, q, np.nan))
        t_in = np.where(q > 0, -b - root, np.inf)
        t_out = np.where(q > 0, -b + root, -np.inf)
        return t_in, t_out

    def _ball_volume(self, c, r):
        d = np.linalg.norm(c - np.array(self.center), axis=-1)
        return _lens_area(d, self.radius, r)

    def _proposal_box(self, c, r):
        # frame rotated so that the disk centre sits on the negative first axis
        rel = c - np.array(self.center)
        d = np.linalg.norm(rel, axis=-1)
        safe = np.where(d > 0, d, 1.0)
        u = np.where(d[:, None] > 0, rel / safe[:, None], np.array([1.0, 0.0]))
        frame = np.stack([u, np.stack([-u[:, 1], u[:, 0]], axis=-1)], axis=1)
        R = self.radius
        # coordinates along u measured from c; disk spans [-d-R, -d+R]
        lo0 = np.maximum(-r, -d - R)
        hi0 = np.minimum(r, -d + R)
        xi = np.where(d > 0, (d * d + r * r - R * R) / (2 * safe), 0.0)
        w_int = np.sqrt(np.clip(r * r - xi * xi, 0.0, None))
        top_disk_in_ball = d * d + R * R < r * r
        top_ball_in_disk = d * d + r * r < R * R
        w = np.where(top_ball_in_disk, r, np.where(top_disk_in_ball, R, w_int))
        w = np.minimum(w, np.minimum(r, R))
        lo = np.stack([lo0, -w], axis=-1)
        hi = np.stack([hi0, w], axis=-1)
        return frame, lo, hi


@dataclass(frozen=True)
class Halfspace(Domain):
    """{x : x·normal < 0}; used only for the boundary-blow-up computations."""

    normal: tuple

    def __post_init__(self):
        nu = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
            raise ValueError("Halfspace normal must be a unit vector")
        object.__setattr__(self, "normal", tuple(nu))

    @property
    def n(self) -> int:
        return len(self.normal)

    @property
    def volume(self) -> float:
        return math.inf

    def contains(self, x):
        x = _points(x, self.n)
        return x @ np.array(self.normal) < 0

    def outward_normal(self, x):
        return np.array(self.normal)

    def _ball_volume(self, c, r):
        d = c @ np.array(self.normal)
        t = np.clip(d / r, -1.0, 1.0)
        cap = 0.5 * betainc((self.n + 1) / 2, 0.5, 1.0 - t * t)
        frac = np.where(t >= 0, cap, 1.0 - cap)
        return unit_ball_volume(self.n) * r**self.n * frac


def _segment_integral(x, r):
    """Antiderivative of sqrt(r^2 - x^2) on [-r, r]."""
    x = np.clip(x, -r, r)
    return 0.5 * (x * np.sqrt(np.clip(r * r - x * x, 0.0, None)) + r * r * np.arcsin(x / r))


def _disk_quadrant_area(X, Y, r):
    """Area of {p : |p| < r, p_0 < X, p_1 < Y}."""
    X, Y, r = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float), np.asarray(r, float))
    X = np.clip(X, -r, r)
    Yc = np.clip(Y, -r, r)
    xy = np.sqrt(np.clip(r * r - Yc * Yc, 0.0, None))
    S = _segment_integral  # integral of s(x) = sqrt(r^2 - x^2)

    def upper(x):
        # integral from -r to x of [min(Y, s) + s]_+ for Y >= 0
        full = 2 * (S(np.minimum(x, -xy), r) - S(-r, r))
        mid_hi = np.clip(x, -xy, xy)
        mid = Yc * (mid_hi + xy) + S(mid_hi, r) - S(-xy, r)
        tail_hi = np.maximum(x, xy)
        tail = 2 * (S(tail_hi, r) - S(xy, r))
        return full + mid + tail

    def lower(x):
        # Y < 0: integrand Y + s on |x| < xy, 0 elsewhere
        hi = np.clip(x, -xy, xy)
        return Yc * (hi + xy) + S(hi, r) - S(-xy, r)

    return np.where(Yc >= 0, upper(X), lower(X))


def _lens_area(d, R, r):
    d, r = np.broadcast_arrays(np.asarray(d, float), np.asarray(r, float))
    small = np.minimum(R, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        a1 = np.arccos(np.clip((d * d + R * R - r * r) / (2 * d * R), -1, 1))
        a2 = np.arccos(np.clip((d * d + r * r - R * R) / (2 * d * r), -1, 1))
        k = np.sqrt(np.clip((-d + R + r) * (d + R - r) * (d - R + r) * (d + R + r), 0, None))
        lens = R * R * a1 + r * r * a2 - 0.5 * k
    nested = d <= np.abs(R - r)
    return np.where(d >= R + r, 0.0, np.where(nested, math.pi * small**2, lens))


def contains(domain: Domain, x) -> np.ndarray | bool:
    out = domain.contains(x)
    return bool(out) if np.ndim(out) == 0 else out


def outward_normal(domain: Domain, x) -> np.ndarray:
    return domain.outward_normal(x)


def ball_intersection_volume(domain: Domain, center, r):
    """Lebesgue measure of ``domain ∩ B_r(center)`` (closed form for every shape)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radius must be positive")
    c = _points(center, domain.n)
    out = domain._ball_volume(c, r)
    return float(out) if np.ndim(out) == 0 else out


def sample_uniform_in_intersection(domain: Domain, center, r, rng, slot_base: int = 0):
    """Uniform points on ``domain ∩ B_r(center)``, one per row of ``center``.

    Rejection from a box enclosing the intersection; the k-th attempt of a row
    uses random slot ``slot_base + k`` of that row's stream.
    """
    c = _points(center, domain.n)
    scalar = c.ndim == 1
    c = np.atleast_2d(c)
    m = len(c)
    r = np.broadcast_to(np.asarray(r, dtype=float), (m,)).copy()
    batch = as_batch(rng, m)
    frame, lo, hi = domain._proposal_box(c, r)
    if np.any(np.any(hi <= lo, axis=-1)):
        raise GeometryError("ball does not meet the domain")
    out = np.empty_like(c)
    pending = np.arange(m)
    n = domain.n
    for attempt in range(REJECTION_CAP):
        if not len(pending):
            break
        u = batch.uniform(slot_base + attempt)[:, :n] if n <= 2 else None
        local = lo[pending] + u * (hi[pending] - lo[pending])
        if frame is not None:
            y = c[pending] + np.einsum("mk,mkj->mj", local, frame[pending])
        else:
            y = local
        ok = (np.sum((y - c[pending]) ** 2, axis=-1) < r[pending] ** 2) & domain.contains(y)
        out[pending[ok]] = y[ok]
        pending = pending[~ok]
        batch = batch.subset(~ok)
    else:
        if len(pending):
            raise GeometryError(f"rejection cap of {REJECTION_CAP} exceeded")
    return out[0] if scalar else out
