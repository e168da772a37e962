"""Adam training loop with Chamfer-based early stopping."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import siren
from .ad_engine import Tape
from .fd_curvature import DEFAULT_STEP
from .losses import VARIANTS, LossWeights, RegularizerConfig, total_loss
from .mesh_metrics import EmptySurface, chamfer, marching_cubes
from .sampling import NormalizedCloud, PointCloud, normalize, sample_batches

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "dm", "dnm", "eik", "fd", "total", "wall_ms")


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, report: "TrainReport"):
        super().__init__(msg)
        self.report = report


@dataclass
class TrainConfig:
    # optimisation
    lr: float = 5e-5
    max_iters: int = 3000
    patience: int = 1500
    eval_every: int = 100
    seed: int = 0
    # objective
    variant: str = "ncr-fd"
    weights: LossWeights = field(default_factory=LossWeights)
    fd_step: float = DEFAULT_STEP
    shell_sigma: float = 0.01
    alpha: float = 100.0
    full_denominator: bool = False
    fd_gradient: bool = False
    # desk-scale network and batches
    width: int = 64
    depth: int = 3
    omega0: float = 4.0
    n_surface: int = 1000
    n_offsurface: int = 1000
    n_shell: Optional[int] = None
    # early-stopping evaluation
    eval_res: int = 64
    eval_points: int = 10_000
    eval_samples: int = 20_000

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.max_iters < 1 or self.eval_every < 1:
            raise ValueError("max_iters and eval_every must be >= 1")
        if self.patience < self.eval_every:
            raise ValueError("patience must be >= eval_every")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.shell_sigma < 0:
            raise ValueError("shell_sigma must be non-negative")

    def regularizer(self) -> RegularizerConfig:
        return RegularizerConfig(self.fd_step, self.alpha, self.full_denominator, self.fd_gradient)


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params: List[np.ndarray], grads: List[np.ndarray], state: AdamState,
              lr: float) -> Tuple[List[np.ndarray], bool]:
    """One bias-corrected Adam update.

    Returns ``(new_params, applied)``; a non-finite gradient leaves both the
    parameters and the state untouched and reports ``applied=False``.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient count mismatch")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
    if not all(np.all(np.isfinite(g)) for g in grads):
        return [p.copy() for p in params], False
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        out.append(p - lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps))
    return out, True


@dataclass
class TrainReport:
    best_iter: int = 0
    best_cd: float = math.inf
    iters_run: int = 0
    wall_seconds: float = 0.0
    rows: List[dict] = field(default_factory=list)
    cd_history: List[Tuple[int, float]] = field(default_factory=list)
    evals_per_iter: int = 0
    total_evals: int = 0
    skipped_iters: int = 0
    stopped_early: bool = False

    def iteration_ms(self) -> float:
        return 1e3 * self.wall_seconds / max(self.iters_run, 1)


class MeshChamferEvaluator:
    """CD between a marching-cubes extraction and a held-out point set."""

    def __init__(self, held_out: np.ndarray, resolution: int = 64, n_samples: int = 20_000,
                 seed: int = 0):
        self.held_out = np.asarray(held_out, dtype=np.float64)
        self.resolution = resolution
        self.n_samples = n_samples
        self.seed = seed

    def __call__(self, params: siren.SirenParams) -> float:
        try:
            mesh = marching_cubes(lambda x: siren.forward(params, x), self.resolution)
        except EmptySurface:
            return math.inf
        if len(mesh.triangles) == 0:
            return math.inf
        pts, _ = mesh.sample(self.n_samples, np.random.default_rng(self.seed))
        return chamfer(pts, self.held_out)


def _as_normalized(cloud) -> NormalizedCloud:
    if isinstance(cloud, NormalizedCloud):
        return cloud
    return normalize(cloud)


def train(cloud, config: TrainConfig, cd_evaluator: Optional[Callable] = None,
          log_path=None, checkpoint_dir=None, verbose: bool = False
          ) -> Tuple[siren.SirenParams, TrainReport]:
    """Fit a SIREN to ``cloud``; returns the best-CD parameters and a report.

    ``cloud`` may be raw (it is normalized first) or already normalized.
    ``cd_evaluator(params) -> float`` overrides the default mesh-based CD.
    """
    ncloud = _as_normalized(cloud)
    rng = np.random.default_rng(config.seed)
    n_pts = ncloud.points.shape[0]
    held = rng.choice(n_pts, size=min(config.eval_points, n_pts), replace=False)
    if cd_evaluator is None:
        cd_evaluator = MeshChamferEvaluator(ncloud.points[held], config.eval_res,
                                            config.eval_samples, config.seed)
    params = siren.init(config.seed, config.width, config.depth, config.omega0,
                         output_gain=1.0 / config.omega0)
    arrays = params.arrays()
    state = AdamState.zeros_like(arrays)
    reg = config.regularizer()
    report = TrainReport()
    best = params.copy()
    best_done = 0

    log_fh = writer = None
    if log_path is not None:
        log_fh = open(log_path, "w", newline="")
        writer = csv.writer(log_fh)
        writer.writerow(LOG_COLUMNS)
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)

    t_start = time.perf_counter()
    try:
        for it in range(config.max_iters):
            t0 = time.perf_counter()
            tape = Tape()
            model = siren.TapedSiren(params, tape)
            batches = sample_batches(ncloud, config.n_surface, config.n_offsurface,
                                     config.shell_sigma, rng, config.n_shell)
            total, bd, _ = total_loss(model, batches, config.weights, config.variant, reg, rng)
            report.total_evals += model.n_evals
            report.evals_per_iter = model.n_evals
            if not math.isfinite(bd.total):
                report.iters_run = it
                report.wall_seconds = time.perf_counter() - t_start
                raise TrainingDiverged(f"non-finite loss at iteration {it}: {bd}", report)
            grads = tape.grad(total, model.leaves())
            arrays, applied = adam_step(arrays, grads, state, config.lr)
            if applied:
                params = params.with_arrays(arrays)
            else:
                report.skipped_iters += 1
                log.warning("iteration %d: non-finite gradient, update skipped", it)
            row = {"iter": it, "dm": bd.dm, "dnm": bd.dnm, "eik": bd.eik, "fd": bd.fd,
                   "total": bd.total, "wall_ms": 1e3 * (time.perf_counter() - t0)}
            report.rows.append(row)
            if writer is not None:
                writer.writerow([row[c] for c in LOG_COLUMNS])
            done = it + 1
            report.iters_run = done
            if done % config.eval_every == 0 or done == config.max_iters:
                cd = float(cd_evaluator(params))
                report.cd_history.append((done, cd))
                if cd < report.best_cd:
                    report.best_cd, report.best_iter, best_done = cd, done, done
                    best = params.copy()
                    if ckdir is not None:
                        siren.save_checkpoint(best, ckdir / "best.ckpt")
                if verbose:
                    print(f"iter {done:6d}  total {bd.total:.5g}  cd {cd:.5g}  best {report.best_cd:.5g}"
                          f" @ {report.best_iter}", flush=True)
                if done - best_done >= config.patience:
                    report.stopped_early = True
                    break
    finally:
        if log_fh is not None:
            log_fh.close()
    report.wall_seconds = time.perf_counter() - t_start
    if ckdir is not None:
        siren.save_checkpoint(params, ckdir / "final.ckpt")
        if not (ckdir / "best.ckpt").exists():
            siren.save_checkpoint(best, ckdir / "best.ckpt")
    return best, report
