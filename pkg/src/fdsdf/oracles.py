"""Closed-form fields with analytic gradients, Hessians and curvatures.

These are the ground truth for the finite-difference checks.  All methods
take points of shape (N, 3) (or (3,)) and are vectorized.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .frames import TangentFrame


class MedialAxisError(ValueError):
    """Query point too close to where the distance field is not smooth."""


def _pts(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=np.float64))


def _outer(a, b):
    return a[:, :, None] * b[:, None, :]


class AnalyticShape:
    kind = "abstract"
    is_sdf = True
    smooth = True
    feature_radius = 1.0
    bbox = (np.full(3, -1.0), np.full(3, 1.0))

    def sdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def gaussian_curvature(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.sdf(x)

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Points on the zero set by projecting thin-shell samples."""
        if not self.is_sdf:
            raise NotImplementedError("surface sampling needs a distance field")
        lo, hi = self.bbox
        band = 0.02 * float(np.max(hi - lo))
        out = []
        have = 0
        while have < n:
            p = rng.uniform(lo - band, hi + band, size=(max(4 * n, 1024), 3))
            d = self.sdf(p)
            p = p[np.abs(d) < band]
            if p.shape[0] == 0:
                continue
            p = p - self.sdf(p)[:, None] * self.gradient(p)
            out.append(p)
            have += p.shape[0]
        return np.concatenate(out)[:n]

    def normals(self, x) -> np.ndarray:
        g = self.gradient(x)
        return g / np.linalg.norm(g, axis=1, keepdims=True)


class Plane(AnalyticShape):
    kind = "plane"

    def __init__(self, normal=(0.0, 0.0, 1.0), offset: float = 0.0):
        n = np.asarray(normal, dtype=np.float64)
        self.n = n / np.linalg.norm(n)
        self.offset = float(offset)

    def sdf(self, x):
        return _pts(x) @ self.n - self.offset

    def gradient(self, x):
        return np.broadcast_to(self.n, _pts(x).shape).copy()

    def hessian(self, x):
        return np.zeros((_pts(x).shape[0], 3, 3))

    def gaussian_curvature(self, x):
        return np.zeros(_pts(x).shape[0])


class Sphere(AnalyticShape):
    kind = "sphere"

    def __init__(self, radius: float = 0.5, center=(0.0, 0.0, 0.0)):
        self.r = float(radius)
        self.c = np.asarray(center, dtype=np.float64)
        self.feature_radius = self.r
        self.bbox = (self.c - self.r, self.c + self.r)

    def sdf(self, x):
        return np.linalg.norm(_pts(x) - self.c, axis=1) - self.r

    def gradient(self, x):
        d = _pts(x) - self.c
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def hessian(self, x):
        d = _pts(x) - self.c
        rho = np.linalg.norm(d, axis=1)
        n = d / rho[:, None]
        return (np.eye(3)[None] - _outer(n, n)) / rho[:, None, None]

    def gaussian_curvature(self, x):
        return np.full(_pts(x).shape[0], 1.0 / self.r ** 2)

    def sample_surface(self, n, rng):
        g = rng.normal(size=(n, 3))
        return self.c + self.r * g / np.linalg.norm(g, axis=1, keepdims=True)


class Cylinder(AnalyticShape):
    """Infinite cylinder around the z axis; sampled for |z| <= half_height."""

    kind = "cylinder"

    def __init__(self, radius: float = 0.5, half_height: float = 0.8):
        self.r = float(radius)
        self.half_height = float(half_height)
        self.feature_radius = self.r
        self.bbox = (np.array([-self.r, -self.r, -half_height]),
                     np.array([self.r, self.r, half_height]))

    def _polar(self, x):
        p = _pts(x)
        rho = np.hypot(p[:, 0], p[:, 1])
        return p, rho

    def sdf(self, x):
        _, rho = self._polar(x)
        return rho - self.r

    def gradient(self, x):
        p, rho = self._polar(x)
        return np.stack([p[:, 0] / rho, p[:, 1] / rho, np.zeros_like(rho)], axis=1)

    def hessian(self, x):
        p, rho = self._polar(x)
        t = np.stack([-p[:, 1] / rho, p[:, 0] / rho, np.zeros_like(rho)], axis=1)
        return _outer(t, t) / rho[:, None, None]

    def gaussian_curvature(self, x):
        return np.zeros(_pts(x).shape[0])

    def sample_surface(self, n, rng):
        phi = rng.uniform(0, 2 * np.pi, n)
        z = rng.uniform(-self.half_height, self.half_height, n)
        return np.stack([self.r * np.cos(phi), self.r * np.sin(phi), z], axis=1)


class Torus(AnalyticShape):
    """Torus around the z axis: major radius R, tube radius r."""

    kind = "torus"

    def __init__(self, major: float = 1.0, minor: float = 0.25):
        self.R = float(major)
        self.r = float(minor)
        self.feature_radius = self.r
        e = self.R + self.r
        self.bbox = (np.array([-e, -e, -self.r]), np.array([e, e, self.r]))

    def _parts(self, x):
        p = _pts(x)
        rho = np.hypot(p[:, 0], p[:, 1])
        a = rho - self.R
        d = np.hypot(a, p[:, 2])
        return p, rho, a, d

    def sdf(self, x):
        return self._parts(x)[3] - self.r

    def gradient(self, x):
        p, rho, a, d = self._parts(x)
        with np.errstate(divide="ignore", invalid="ignore"):  # axis and core circle: NaN
            s = a / (d * rho)
            return np.stack([s * p[:, 0], s * p[:, 1], p[:, 2] / d], axis=1)

    def hessian(self, x):
        p, rho, a, d = self._parts(x)
        zero = np.zeros_like(rho)
        e_rho = np.stack([p[:, 0] / rho, p[:, 1] / rho, zero], axis=1)
        e_z = np.tile([0.0, 0.0, 1.0], (rho.size, 1))
        t = np.stack([-p[:, 1] / rho, p[:, 0] / rho, zero], axis=1)
        b = (p[:, 2, None] * e_rho - a[:, None] * e_z) / d[:, None]
        return (_outer(b, b) / d[:, None, None]
                + _outer(t, t) * (a / (d * rho))[:, None, None])

    def gaussian_curvature(self, x):
        # tube curvature 1/d times the around-axis curvature cos(theta)/rho
        _, rho, a, d = self._parts(x)
        return (1.0 / d) * (a / (d * rho))

    def sample_surface(self, n, rng):
        # rejection on the area element (R + r cos theta)
        out = []
        have = 0
        while have < n:
            th = rng.uniform(0, 2 * np.pi, 2 * n)
            keep = rng.uniform(0, self.R + self.r, 2 * n) < self.R + self.r * np.cos(th)
            th = th[keep]
            phi = rng.uniform(0, 2 * np.pi, th.size)
            rad = self.R + self.r * np.cos(th)
            out.append(np.stack([rad * np.cos(phi), rad * np.sin(phi), self.r * np.sin(th)], axis=1))
            have += th.size
        return np.concatenate(out)[:n]


class RoundedBox(AnalyticShape):
    """Exact SDF of an axis-aligned box with edges rounded by ``rounding``.

    ``rounding=0`` gives the plain box.
    """

    kind = "box"

    def __init__(self, half_extents=(0.5, 0.5, 0.5), rounding: float = 0.0):
        self.half = np.asarray(half_extents, dtype=np.float64)
        self.rr = float(rounding)
        self.inner = self.half - self.rr
        if np.any(self.inner < 0):
            raise ValueError("rounding larger than the box")
        self.smooth = self.rr > 0
        self.feature_radius = self.rr if self.rr > 0 else float(self.half.min())
        self.bbox = (-self.half, self.half)
        if self.rr > 0:
            self.kind = "rounded_box"

    def _q(self, x):
        p = _pts(x)
        return p, np.abs(p) - self.inner

    def sdf(self, x):
        _, q = self._q(x)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside - self.rr

    def gradient(self, x):
        p, q = self._q(x)
        s = np.where(p >= 0, 1.0, -1.0)
        m = np.maximum(q, 0.0)
        d = np.linalg.norm(m, axis=1)
        out = np.zeros_like(p)
        o = d > 0
        out[o] = s[o] * m[o] / d[o, None]
        i = ~o
        k = np.argmax(q[i], axis=1)
        out[np.flatnonzero(i), k] = s[i, k]
        return out

    def hessian(self, x):
        p, q = self._q(x)
        s = np.where(p >= 0, 1.0, -1.0)
        m = np.maximum(q, 0.0)
        d = np.linalg.norm(m, axis=1)
        H = np.zeros((p.shape[0], 3, 3))
        o = d > 0
        nm = m[o] / d[o, None]
        active = (q[o] > 0).astype(np.float64)
        local = (active[:, :, None] * np.eye(3)[None] - _outer(nm, nm)) / d[o, None, None]
        H[o] = local * _outer(s[o], s[o])
        return H

    def gaussian_curvature(self, x):
        _, q = self._q(x)
        m = np.maximum(q, 0.0)
        d = np.linalg.norm(m, axis=1)
        corner = (q > 0).all(axis=1)
        with np.errstate(divide="ignore"):
            return np.where(corner, 1.0 / np.where(corner, d, 1.0) ** 2, 0.0)

    def sample_surface(self, n, rng):
        # area-weighted: faces, quarter-cylinder edges, sphere-octant corners
        a = self.inner
        rr = self.rr
        faces = [(k, sgn) for k in range(3) for sgn in (-1.0, 1.0)]
        face_area = [4 * a[(k + 1) % 3] * a[(k + 2) % 3] for k, _ in faces]
        edges = [(k, s1, s2) for k in range(3) for s1 in (-1.0, 1.0) for s2 in (-1.0, 1.0)]
        edge_area = [2 * a[k] * 0.5 * np.pi * rr for k, _, _ in edges]
        corners = [np.array([sx, sy, sz]) for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
        corner_area = [0.5 * np.pi * rr * rr] * 8
        areas = np.array(face_area + edge_area + corner_area)
        counts = rng.multinomial(n, areas / areas.sum())
        out = []
        for (k, sgn), c in zip(faces, counts[:6]):
            pts = rng.uniform(-a, a, size=(c, 3))
            pts[:, k] = sgn * self.half[k]
            out.append(pts)
        for (k, s1, s2), c in zip(edges, counts[6:18]):
            i, j = (k + 1) % 3, (k + 2) % 3
            th = rng.uniform(0, 0.5 * np.pi, c)
            pts = np.empty((c, 3))
            pts[:, k] = rng.uniform(-a[k], a[k], c)
            pts[:, i] = s1 * (a[i] + rr * np.cos(th))
            pts[:, j] = s2 * (a[j] + rr * np.sin(th))
            out.append(pts)
        for sg, c in zip(corners, counts[18:]):
            g = np.abs(rng.normal(size=(c, 3)))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            out.append(sg * (a + rr * g))
        pts = np.concatenate(out)
        return pts[rng.permutation(pts.shape[0])]


class Quadratic(AnalyticShape):
    """``f(x) = x'Ax + b'x + c`` with symmetric A (not a distance field)."""

    kind = "quadratic"
    is_sdf = False

    def __init__(self, A, b=(0.0, 0.0, 0.0), c: float = 0.0):
        A = np.asarray(A, dtype=np.float64)
        self.A = 0.5 * (A + A.T)
        self.b = np.asarray(b, dtype=np.float64)
        self.c = float(c)

    def sdf(self, x):
        p = _pts(x)
        return np.einsum("ni,ij,nj->n", p, self.A, p) + p @ self.b + self.c

    def gradient(self, x):
        return 2.0 * _pts(x) @ self.A + self.b

    def hessian(self, x):
        return np.broadcast_to(2.0 * self.A, (_pts(x).shape[0], 3, 3)).copy()

    def gaussian_curvature(self, x):
        # det of the Hessian restricted to the tangent plane, over |g|^2
        g = self.gradient(x)
        gn = np.linalg.norm(g, axis=1)
        n = g / gn[:, None]
        out = np.empty(g.shape[0])
        H = self.hessian(x)
        for i in range(g.shape[0]):
            # tangent basis from the SVD null space of n
            _, _, vt = np.linalg.svd(n[i][None])
            U = vt[1:].T
            out[i] = np.linalg.det(U.T @ H[i] @ U) / gn[i] ** 2
        return out


SHAPES = {
    "plane": Plane,
    "sphere": Sphere,
    "cylinder": Cylinder,
    "torus": Torus,
    "box": RoundedBox,
    "rounded_box": lambda: RoundedBox((0.5, 0.5, 0.5), 0.1),
}


def make_shape(name: str, **kw) -> AnalyticShape:
    if name not in SHAPES:
        raise KeyError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}")
    return SHAPES[name](**kw)


def _guard(shape: AnalyticShape, x0):
    if shape.is_sdf:
        gn = np.linalg.norm(shape.gradient(x0), axis=1)
        if np.any(~np.isfinite(gn)) or np.any(np.abs(gn - 1.0) > 0.1):
            raise MedialAxisError(f"{shape.kind}: query point near the medial axis")


def analytic_shape_operator(shape: AnalyticShape, x0, frame: TangentFrame):
    """Exact ``(u'Hu, u'Hv, v'Hv)`` for the analytic Hessian."""
    x0 = _pts(x0)
    _guard(shape, x0)
    H = shape.hessian(x0)
    u = np.atleast_2d(frame.u)
    v = np.atleast_2d(frame.v)
    uHu = np.einsum("ni,nij,nj->n", u, H, u)
    uHv = np.einsum("ni,nij,nj->n", u, H, v)
    vHv = np.einsum("ni,nij,nj->n", v, H, v)
    return uHu, uHv, vHv


def analytic_gaussian_curvature(shape: AnalyticShape, x0) -> np.ndarray:
    """Closed-form product of principal curvatures."""
    x0 = _pts(x0)
    _guard(shape, x0)
    return shape.gaussian_curvature(x0)


def bordered_hessian_curvature(shape: AnalyticShape, x0) -> np.ndarray:
    """``-det([[H, g], [g', 0]]) / |g|^4`` evaluated on the analytic field."""
    x0 = _pts(x0)
    g = shape.gradient(x0)
    gn = np.linalg.norm(g, axis=1)
    if np.any(~(gn > 0)):
        raise ValueError("zero gradient: bordered Hessian curvature undefined")
    H = shape.hessian(x0)
    B = np.zeros((x0.shape[0], 4, 4))
    B[:, :3, :3] = H
    B[:, :3, 3] = g
    B[:, 3, :3] = g
    return -np.linalg.det(B) / gn ** 4


def near_surface_points(shape: AnalyticShape, n: int, rng: np.random.Generator,
                        offset: float = 0.0) -> np.ndarray:
    """Surface samples moved ``offset`` along the normal."""
    p = shape.sample_surface(n, rng)
    if offset:
        p = p + offset * shape.normals(p)
    return p
