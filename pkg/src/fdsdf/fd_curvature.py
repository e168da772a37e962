"""Central-difference second derivatives in a tangent frame.

From nine field evaluations around ``x0``::

    f_uu = (f(x0+hu) - 2 f(x0) + f(x0-hu)) / h^2
    f_vv = (f(x0+hv) - 2 f(x0) + f(x0-hv)) / h^2
    f_uv = (f(x0+hu+hv) - f(x0+hu-hv) - f(x0-hu+hv) + f(x0-hu-hv)) / (4 h^2)

each with truncation error ``O(h^2)``.  Evaluators may return tape nodes
(training) or plain arrays (analytic fields); the arithmetic is the same.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .frames import GRAD_EPS, StencilOffsets

DEFAULT_STEP = 1e-2


@dataclass
class SecondForm:
    """Projected Hessian entries (u'Hu, v'Hv, u'Hv); symmetric so one mixed term."""

    fuu: Any
    fvv: Any
    fuv: Any
    h: float


def second_form(evaluator: Callable, stencil: StencilOffsets, tape=None,
                center_value=None) -> SecondForm:
    """Estimate (f_uu, f_vv, f_uv) from the stencil.

    The center is evaluated once and shared by ``f_uu`` and ``f_vv``; pass
    ``center_value`` when it is already available (e.g. from a gradient
    evaluation at the same points) to skip that call.  ``tape`` is accepted
    for symmetry with the other taped operations; the evaluator is expected
    to record onto it.
    """
    h = stencil.h
    f0 = evaluator(stencil.center) if center_value is None else center_value
    fpu, fmu, fpv, fmv = (evaluator(p) for p in stencil.axis_points)
    fpp, fpm, fmp, fmm = (evaluator(p) for p in stencil.corner_points)
    inv_h2 = 1.0 / (h * h)
    fuu = (fpu + fmu - 2.0 * f0) * inv_h2
    fvv = (fpv + fmv - 2.0 * f0) * inv_h2
    fuv = (fpp - fpm - fmp + fmm) * (0.25 * inv_h2)
    return SecondForm(fuu, fvv, fuv, h)


def projected_determinant_fd(form: SecondForm):
    """``f_uu f_vv - f_uv^2``: zero when a principal curvature vanishes."""
    return form.fuu * form.fvv - form.fuv * form.fuv


def gaussian_curvature_fd(form: SecondForm, grad_norm: Optional[Any] = None):
    """``(f_uu f_vv - f_uv^2) / |grad f|^4``.

    With ``grad_norm=None`` the denominator is taken as 1, the near-surface
    simplification used during training.
    """
    det = projected_determinant_fd(form)
    if grad_norm is None:
        return det
    gn = grad_norm.value if hasattr(grad_norm, "value") else np.asarray(grad_norm)
    if np.any(~(gn > GRAD_EPS)):
        raise ValueError("gradient norm too small for the curvature denominator")
    g2 = grad_norm * grad_norm
    return det / (g2 * g2)


class CountingEvaluator:
    """Wraps an evaluator and counts calls and evaluated points."""

    def __init__(self, fn: Callable):
        self.fn = fn
        self.calls = 0
        self.points = 0

    def __call__(self, x):
        x = np.atleast_2d(x)
        self.calls += 1
        self.points += x.shape[0]
        return self.fn(x)


@dataclass
class ConvergenceRow:
    shape: str
    h: float
    max_error: float


@dataclass
class ConvergenceResult:
    shape: str
    rows: list
    order: float
    exact: bool

    def ok(self, lo: float = 1.5, hi: float = 2.5) -> bool:
        return self.exact or lo <= self.order <= hi


def stencil_convergence(shape, steps=(0.04, 0.02, 0.01, 0.005), n_points: int = 200,
                        seed: int = 0, offset: float = 0.02, exact_tol: float = 1e-9
                        ) -> ConvergenceResult:
    """Max entry error of the FD second form against the analytic Hessian.

    Points sit ``offset`` off the surface with random tangent frames; the
    same points and frames are reused for every step.  The fitted order is
    the least-squares slope of ``log err`` against ``log h``.  Errors below
    ``exact_tol / h^2`` (round-off scale) mark the shape as exact.
    """
    from .frames import complete_frames, make_stencil
    from .oracles import analytic_shape_operator, near_surface_points

    rng = np.random.default_rng(seed)
    if getattr(shape, "is_sdf", True):
        x0 = near_surface_points(shape, n_points, rng, offset)
    else:
        x0 = rng.uniform(-1.0, 1.0, size=(n_points, 3))
    frame = complete_frames(shape.gradient(x0), rng)
    uHu, uHv, vHv = analytic_shape_operator(shape, x0, frame)
    rows = []
    exact = True
    for h in steps:
        form = second_form(shape.sdf, make_stencil(x0, frame, h))
        err = max(float(np.max(np.abs(form.fuu - uHu))), float(np.max(np.abs(form.fvv - vHv))),
                  float(np.max(np.abs(form.fuv - uHv))))
        rows.append(ConvergenceRow(shape.kind, h, err))
        exact = exact and err <= exact_tol / (h * h)
    errs = np.array([r.max_error for r in rows])
    hs = np.array(steps, dtype=float)
    if exact or np.any(errs <= 0):
        order = float("nan")
    else:
        order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return ConvergenceResult(shape.kind, rows, order, exact)
