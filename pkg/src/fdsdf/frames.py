"""Random tangent frames around the field normal and the 9-point stencil."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAD_EPS = 1e-6


class DegenerateGradient(ValueError):
    """The gradient is too small to define a normal."""


@dataclass
class TangentFrame:
    """Orthonormal right-handed triple; arrays are (3,) or (N, 3)."""

    n: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __len__(self) -> int:
        return 1 if self.n.ndim == 1 else self.n.shape[0]

    def subset(self, mask) -> "TangentFrame":
        return TangentFrame(self.n[mask], self.u[mask], self.v[mask])


@dataclass
class StencilOffsets:
    """Stencil points around ``center`` (N, 3).

    ``axis_points`` is (4, N, 3) ordered ``+u, -u, +v, -v``;
    ``corner_points`` is (4, N, 3) ordered ``++, +-, -+, --`` in (u, v).
    """

    center: np.ndarray
    axis_points: np.ndarray
    corner_points: np.ndarray
    h: float

    def all_points(self) -> np.ndarray:
        return np.concatenate([self.center[None], self.axis_points, self.corner_points])


def _householder_basis(n: np.ndarray):
    # reflection with w = n + s*z maps -s*z to n; columns 0, 1 then span n's complement
    s = np.where(n[:, 2] >= 0.0, 1.0, -1.0)
    w = n.copy()
    w[:, 2] += s
    ww = np.einsum("ij,ij->i", w, w)
    e1 = np.zeros_like(n)
    e1[:, 0] = 1.0
    e2 = np.zeros_like(n)
    e2[:, 1] = 1.0
    b1 = e1 - (2.0 * w[:, 0] / ww)[:, None] * w
    b2 = e2 - (2.0 * w[:, 1] / ww)[:, None] * w
    return b1, b2


def complete_frames(gradients, rng: np.random.Generator, theta=None) -> TangentFrame:
    """Batched frame completion for (N, 3) gradients.

    Raises :class:`DegenerateGradient` if any gradient norm is below
    ``GRAD_EPS``; use :func:`valid_gradient_mask` first to filter.
    """
    g = np.atleast_2d(np.asarray(gradients, dtype=np.float64))
    norm = np.linalg.norm(g, axis=1)
    if np.any(~(norm > GRAD_EPS)):
        raise DegenerateGradient("gradient norm below threshold; normal undefined")
    n = g / norm[:, None]
    b1, b2 = _householder_basis(n)
    if theta is None:
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n.shape[0])
    theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), (n.shape[0],))
    u = np.cos(theta)[:, None] * b1 + np.sin(theta)[:, None] * b2
    v = np.cross(n, u)
    return TangentFrame(n, u, v)


def complete_frame(gradient, rng: np.random.Generator, theta=None) -> TangentFrame:
    """Random orthonormal completion (n, u, v) of a single gradient."""
    fr = complete_frames(np.asarray(gradient, dtype=np.float64)[None], rng, theta)
    return TangentFrame(fr.n[0], fr.u[0], fr.v[0])


def valid_gradient_mask(gradients) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(gradients), axis=1) > GRAD_EPS


def make_stencil(x0, frame: TangentFrame, h: float) -> StencilOffsets:
    if not h > 0:
        raise ValueError(f"step h must be positive, got {h}")
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    hu = h * np.atleast_2d(frame.u)
    hv = h * np.atleast_2d(frame.v)
    axis = np.stack([x0 + hu, x0 - hu, x0 + hv, x0 - hv])
    corner = np.stack([x0 + hu + hv, x0 + hu - hv, x0 - hu + hv, x0 - hu - hv])
    return StencilOffsets(x0, axis, corner, float(h))
