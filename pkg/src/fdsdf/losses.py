"""Training objective: Dirichlet + non-manifold + Eikonal + FD curvature.

``total = lambda_dm * dm + lambda_dnm * dnm + lambda_eik * eik + lambda_fd * fd``

The Dirichlet weight is explicit so that ``lambda_fd`` keeps an O(1) scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from .ad_engine import ScalarNode, TangentTriple, Tape
from .fd_curvature import (DEFAULT_STEP, gaussian_curvature_fd, projected_determinant_fd,
                           second_form)
from .frames import GRAD_EPS, TangentFrame, complete_frames, make_stencil

log = logging.getLogger(__name__)

VARIANTS = ("ncr-fd", "nsh-fd")


@dataclass
class LossWeights:
    lambda_dnm: float = 100.0
    lambda_eik: float = 10.0
    lambda_fd: float = 1.0
    lambda_dm: float = 1000.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{k} must be finite and non-negative, got {v}")


@dataclass
class RegularizerConfig:
    fd_step: float = DEFAULT_STEP
    alpha: float = 100.0
    full_denominator: bool = False
    fd_gradient: bool = False  # central-difference spatial gradients instead of forward mode


@dataclass
class LossBreakdown:
    dm: float
    dnm: float
    eik: float
    fd: float
    total: float
    fd_points: int = 0
    skipped: int = 0


def _require_batch(node: ScalarNode, what: str):
    if node.value.size == 0:
        raise ValueError(f"{what}: empty batch")


def dirichlet_loss(values: ScalarNode) -> ScalarNode:
    """Mean ``|f|`` over surface samples."""
    _require_batch(values, "dirichlet_loss")
    return values.abs().mean()


def nonmanifold_loss(values: ScalarNode, alpha: float = 100.0) -> ScalarNode:
    """Mean ``exp(-alpha |f|)`` over off-surface samples."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    _require_batch(values, "nonmanifold_loss")
    return (values.abs() * (-alpha)).exp().mean()


def eikonal_loss(triples: Sequence[TangentTriple]) -> ScalarNode:
    """Mean ``(|grad f| - 1)^2`` over all points of all given triples."""
    if isinstance(triples, TangentTriple):
        triples = [triples]
    n = sum(t.dx.value.size for t in triples)
    if n == 0:
        raise ValueError("eikonal_loss: empty batch")
    total = None
    for t in triples:
        s = ((t.grad_norm() - 1.0) ** 2).sum()
        total = s if total is None else total + s
    return total * (1.0 / n)


def fd_regularizer(model, shell_points, variant: str, cfg: RegularizerConfig,
                   rng: Optional[np.random.Generator] = None,
                   frames: Optional[TangentFrame] = None):
    """Mean ``|K_FD|`` (ncr-fd) or ``|D_FD|`` (nsh-fd) over the shell batch.

    ``model`` is a :class:`~fdsdf.siren.TapedSiren`.  Frames are built from
    detached gradients; points whose gradient norm is below ``GRAD_EPS`` are
    excluded from the mean.  Returns ``(loss_node, n_used, n_skipped)``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    shell_points = np.atleast_2d(shell_points)
    if shell_points.shape[0] == 0:
        raise ValueError("fd_regularizer: empty shell batch")
    tape: Tape = model.tape
    if cfg.fd_gradient:
        center = model.eval_with_fd_gradient(shell_points)
    else:
        center = model.eval_with_gradient(shell_points)
    grads = center.gradient_array()
    valid = np.linalg.norm(grads, axis=1) > GRAD_EPS
    n_valid = int(valid.sum())
    n_skip = shell_points.shape[0] - n_valid
    if frames is None:
        safe = np.where(valid[:, None], grads, np.array([0.0, 0.0, 1.0]))
        frames = complete_frames(safe, rng if rng is not None else np.random.default_rng())
    stencil = make_stencil(shell_points, frames, cfg.fd_step)
    form = second_form(model.eval, stencil, tape, center_value=center.value)
    if variant == "ncr-fd":
        gn = None
        if cfg.full_denominator:
            gn = center.grad_norm() + (~valid).astype(np.float64)
        term = gaussian_curvature_fd(form, gn)
    else:
        term = projected_determinant_fd(form)
    if n_valid == 0:
        log.warning("all %d shell points have degenerate gradients; fd term set to 0",
                    shell_points.shape[0])
        return tape.const(0.0), 0, n_skip
    if n_skip:
        loss = (term.abs() * valid.astype(np.float64)).sum() * (1.0 / n_valid)
    else:
        loss = term.abs().mean()
    return loss, n_valid, n_skip


@dataclass
class Batches:
    surface: np.ndarray
    offsurface: np.ndarray
    shell: np.ndarray


def total_loss(model, batches: Batches, weights: LossWeights, variant: str,
               cfg: RegularizerConfig, rng: Optional[np.random.Generator] = None,
               frames: Optional[TangentFrame] = None):
    """Assemble the weighted objective; returns ``(total_node, LossBreakdown, parts)``.

    ``parts`` maps term names to their nodes.  The fd term is always computed
    for logging but only joins the objective when ``lambda_fd > 0``.
    """
    grad_fn = model.eval_with_fd_gradient if cfg.fd_gradient else model.eval_with_gradient
    surf = grad_fn(batches.surface)
    off = grad_fn(batches.offsurface)
    dm = dirichlet_loss(surf.value)
    dnm = nonmanifold_loss(off.value, cfg.alpha)
    eik = eikonal_loss([surf, off])
    fd, n_used, n_skip = fd_regularizer(model, batches.shell, variant, cfg, rng, frames)
    total = dm * weights.lambda_dm + dnm * weights.lambda_dnm + eik * weights.lambda_eik
    if weights.lambda_fd > 0:
        total = total + fd * weights.lambda_fd
    bd = LossBreakdown(float(dm.value), float(dnm.value), float(eik.value), float(fd.value),
                       float(total.value), n_used, n_skip)
    parts = {"dm": dm, "dnm": dnm, "eik": eik, "fd": fd}
    return total, bd, parts
