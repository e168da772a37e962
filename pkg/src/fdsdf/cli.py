"""Command line entry point: ``fdsdf <command> [options]``.

Exit codes: 0 success, 1 verification failure, 2 usage or input error,
3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, kernels, oracles, sampling, siren
from .fd_curvature import stencil_convergence
from .losses import VARIANTS, LossWeights
from .mesh_metrics import EmptySurface, evaluate_mesh, marching_cubes, per_vertex_distance
from .trainer import TrainConfig, TrainingDiverged, train

log = logging.getLogger("fdsdf")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

# flag name -> (TrainConfig field or weights field, type)
TRAIN_FLAGS = {
    "fd_step": float, "shell_sigma": float, "variant": str, "lambda_fd": float,
    "lr": float, "patience": int, "mc_res": int, "seed": int, "threads": int,
    "max_iters": int, "eval_every": int, "width": int, "depth": int, "omega0": float,
    "n_surface": int, "n_offsurface": int, "lambda_dnm": float, "lambda_eik": float,
    "lambda_dm": float, "eval_res": int,
}
RUN_DEFAULTS = {"mc_res": 128, "threads": 1}


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: Optional[int] = None
    input_path: Optional[str] = None
    input_sha256: Optional[str] = None
    versions: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    outputs: List[str] = field(default_factory=list)
    exit_code: int = 0
    notes: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _versions() -> dict:
    import skimage
    return {"fdsdf": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scikit-image": skimage.__version__, "kernels": kernels.BACKEND}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# ----------------------------------------------------------------------------
# configuration

def read_config_file(path) -> dict:
    """``key = value`` lines (``#`` comments), or a JSON manifest's ``config``."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input not found: {path}")
    text = p.read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    base = TrainConfig()
    merged = {f.name: getattr(base, f.name) for f in fields(TrainConfig)
              if f.name in TRAIN_FLAGS}
    merged.update({k: getattr(base.weights, k) for k in ("lambda_dnm", "lambda_eik", "lambda_fd",
                                                          "lambda_dm")})
    merged.update(RUN_DEFAULTS)
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            if k not in TRAIN_FLAGS:
                raise UsageError(f"unknown config key {k!r}")
            merged[k] = v
    for k in TRAIN_FLAGS:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    try:
        merged = {k: TRAIN_FLAGS[k](v) for k, v in merged.items()}
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from exc
    if merged["variant"] not in VARIANTS:
        raise UsageError(f"variant must be one of {VARIANTS}")
    if merged["threads"] < 1:
        raise UsageError("threads must be >= 1")
    return merged


def train_config(cfg: dict) -> TrainConfig:
    weights = LossWeights(cfg["lambda_dnm"], cfg["lambda_eik"], cfg["lambda_fd"], cfg["lambda_dm"])
    kw = {k: v for k, v in cfg.items() if k in {f.name for f in fields(TrainConfig)}}
    try:
        return TrainConfig(weights=weights, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _thread_limit(n: int):
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


# ----------------------------------------------------------------------------
# commands

def _load_input(path):
    try:
        return sampling.load(path)
    except FileNotFoundError:
        raise
    except (sampling.CloudParseError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def reconstruct(cloud: sampling.PointCloud, cfg: dict, out_dir: Path, hausdorff_map: bool = False,
                verbose: bool = False):
    """Train, extract, score and write all artefacts; returns (metrics, report, outputs)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ncloud = sampling.normalize(cloud)
    tcfg = train_config(cfg)
    outputs = []
    log_path = out_dir / "train_log.csv"
    try:
        params, report = train(ncloud, tcfg, log_path=log_path, checkpoint_dir=out_dir,
                               verbose=verbose)
    finally:
        outputs.append(str(log_path))
    outputs += [str(out_dir / "best.ckpt"), str(out_dir / "final.ckpt")]
    mesh = marching_cubes(lambda x: siren.forward(params, x), cfg["mc_res"])
    # score in normalized units, write in object units
    rng = np.random.default_rng(cfg["seed"])
    metrics = evaluate_mesh(mesh, ncloud.points, _normals(cloud), rng=rng)
    metrics.to_csv(out_dir / "metrics.csv")
    outputs.append(str(out_dir / "metrics.csv"))
    mesh.vertices = ncloud.to_object(mesh.vertices)
    mesh.save(out_dir / "mesh.obj")
    scalars = {"hausdorff": per_vertex_distance(mesh, cloud.points)} if hausdorff_map else None
    mesh.save(out_dir / "mesh.ply", vertex_scalars=scalars)
    outputs += [str(out_dir / "mesh.obj"), str(out_dir / "mesh.ply")]
    return metrics, report, outputs


def _normals(cloud):
    n = getattr(cloud, "normals", None)
    if n is None:
        return None
    n = np.asarray(n)
    return n if np.all(np.linalg.norm(n, axis=1) > 0) else None


def cmd_reconstruct(args) -> int:
    cfg = resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("reconstruct", cfg, cfg["seed"], str(args.input), versions=_versions(),
                           started=_now())
    cloud = _load_input(args.input)
    manifest.input_sha256 = _sha256(args.input)
    code = EXIT_OK
    try:
        with _thread_limit(cfg["threads"]):
            metrics, report, outputs = reconstruct(cloud, cfg, out_dir, args.hausdorff_map,
                                                   verbose=not args.quiet)
        manifest.outputs = outputs
        manifest.notes = {"best_iter": report.best_iter, "iters_run": report.iters_run,
                          "evals_per_iter": report.evals_per_iter,
                          "iteration_ms": report.iteration_ms(), "metrics": asdict(metrics)}
        print(metrics.table())
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        manifest.notes = {"error": str(exc), "iters_run": exc.report.iters_run}
        code = EXIT_DIVERGED
    except EmptySurface as exc:
        print(f"no surface extracted: {exc}", file=sys.stderr)
        manifest.notes = {"error": str(exc)}
        code = EXIT_DIVERGED
    manifest.exit_code = code
    manifest.finished = _now()
    manifest.write(out_dir)
    return code


STENCIL_SHAPES = {
    "sphere": lambda: oracles.Sphere(0.5),
    "cylinder": lambda: oracles.Cylinder(0.5),
    "torus": lambda: oracles.Torus(1.0, 0.25),
    "quadratic": lambda: oracles.Quadratic(np.diag([1.0, 2.0, -1.0]), (0.3, 0.1, 0.2), -0.1),
}


def cmd_verify_stencils(args) -> int:
    steps = tuple(float(s) for s in args.steps.split(","))
    if len(steps) < 2 or any(h <= 0 for h in steps):
        raise UsageError("need at least two positive steps")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("verify-stencils", {"steps": steps, "n_points": args.n_points},
                           args.seed, versions=_versions(), started=_now())
    results = [stencil_convergence(STENCIL_SHAPES[name](), steps, args.n_points, args.seed)
               for name in args.shapes.split(",")]
    print(f"{'shape':<10} " + " ".join(f"h={h:<9g}" for h in steps) + "  order")
    for r in results:
        errs = " ".join(f"{row.max_error:<11.3e}" for row in r.rows)
        verdict = "exact" if r.exact else f"{r.order:.3f}"
        print(f"{r.shape:<10} {errs}  {verdict}{'' if r.ok() else '  FAIL'}")
    table = out_dir / "stencils.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shape", "h", "max_error", "order", "exact"])
        for r in results:
            for row in r.rows:
                w.writerow([r.shape, row.h, row.max_error, r.order, r.exact])
    code = EXIT_OK if all(r.ok() for r in results) else EXIT_VERIFY
    manifest.outputs = [str(table)]
    manifest.notes = {r.shape: {"order": r.order, "exact": r.exact} for r in results}
    manifest.exit_code = code
    manifest.finished = _now()
    manifest.write(out_dir)
    return code


def cmd_sweep_lambda(args) -> int:
    try:
        lambdas = [float(s) for s in args.lambdas.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad lambda list: {exc}") from exc
    if not lambdas:
        raise UsageError("need at least one lambda value")
    cfg = resolve_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("sweep-lambda", dict(cfg, lambdas=lambdas), cfg["seed"], str(args.input),
                           versions=_versions(), started=_now())
    cloud = _load_input(args.input)
    manifest.input_sha256 = _sha256(args.input)
    table = out_dir / "sweep.csv"
    rows = []
    for lam in lambdas:
        run_cfg = dict(cfg, lambda_fd=lam)
        t0 = time.perf_counter()
        try:
            with _thread_limit(cfg["threads"]):
                m, rep, outs = reconstruct(cloud, run_cfg, out_dir / f"lambda_{lam:g}",
                                           verbose=not args.quiet)
            rows.append({"lambda_fd": lam, "nc": m.nc_x100, "cd": m.cd_x1000, "f1": m.f1_x100,
                         "wall_seconds": time.perf_counter() - t0,
                         "evals_per_iter": rep.evals_per_iter, "status": "ok"})
            manifest.outputs += outs
        except (TrainingDiverged, EmptySurface, ValueError) as exc:
            log.error("lambda_fd=%g failed: %s", lam, exc)
            rows.append({"lambda_fd": lam, "nc": "", "cd": "", "f1": "",
                         "wall_seconds": time.perf_counter() - t0, "evals_per_iter": "",
                         "status": f"failed: {exc}"})
        print(f"lambda_fd={lam:g}  " + "  ".join(f"{k}={rows[-1][k]}" for k in ("cd", "f1", "nc", "status")),
              flush=True)
    with open(table, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    manifest.outputs.append(str(table))
    code = EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_DIVERGED
    manifest.exit_code = code
    manifest.finished = _now()
    manifest.write(out_dir)
    return code


def _surface_samples(pc: sampling.PointCloud, n: int, rng):
    if pc.faces is not None and len(pc.faces):
        s = sampling.resample_mesh_surface(pc.points, pc.faces, n, rng)
        return s.points, s.normals
    return pc.points, _normals(pc)


def cmd_eval(args) -> int:
    pred = _load_input(args.pred)
    gt = _load_input(args.gt)
    if pred.faces is None or len(pred.faces) == 0:
        raise UsageError(f"{args.pred}: predicted mesh has no faces")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("eval", {"threshold": args.threshold, "samples": args.samples,
                                    "seed": args.seed}, args.seed, str(args.gt),
                           _sha256(args.gt), _versions(), _now())
    # same seed on both sides, so a mesh scored against itself resamples identically
    gt_pts, gt_n = _surface_samples(gt, args.samples, np.random.default_rng(args.seed))
    pred_pts, pred_n = _surface_samples(pred, args.samples, np.random.default_rng(args.seed))
    # both sides are scored in the frame that normalizes the ground truth
    ref = sampling.normalize(gt_pts)
    from .mesh_metrics import evaluate
    m = evaluate(ref.to_normalized(pred_pts), pred_n, ref.points, gt_n, args.threshold)
    m.to_csv(out_dir / "metrics.csv")
    print(m.table())
    manifest.outputs = [str(out_dir / "metrics.csv")]
    manifest.notes = {"metrics": asdict(m), "pred_sha256": _sha256(args.pred)}
    manifest.finished = _now()
    manifest.write(out_dir)
    return EXIT_OK


def cmd_oracle_cloud(args) -> int:
    if args.shape not in oracles.SHAPES or args.shape == "plane":
        raise UsageError(f"unknown shape {args.shape!r}")
    if args.n < 1:
        raise UsageError("n must be >= 1")
    shape = oracles.make_shape(args.shape)
    rng = np.random.default_rng(args.seed)
    pts = shape.sample_surface(args.n, rng)
    normals = shape.normals(pts) if args.normals else None
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    sampling.save(out, pts, normals=normals)
    manifest = RunManifest("oracle-cloud", {"shape": args.shape, "n": args.n, "normals": args.normals},
                           args.seed, versions=_versions(), started=_now(), outputs=[str(out)])
    manifest.finished = _now()
    manifest.write(out.parent)
    print(f"wrote {args.n} points to {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser

def _add_train_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("training (flags override --config)")
    g.add_argument("--config", help="key = value file or a previous manifest.json")
    g.add_argument("--fd-step", type=float, help="stencil step h (normalized units)")
    g.add_argument("--shell-sigma", type=float, help="std of the shell-point noise")
    g.add_argument("--variant", choices=VARIANTS)
    g.add_argument("--lambda-fd", type=float, help="curvature regularizer weight")
    g.add_argument("--lambda-dnm", type=float)
    g.add_argument("--lambda-eik", type=float)
    g.add_argument("--lambda-dm", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--patience", type=int, help="early-stopping patience in iterations")
    g.add_argument("--eval-every", type=int)
    g.add_argument("--eval-res", type=int, help="grid resolution of the early-stopping CD")
    g.add_argument("--max-iters", type=int)
    g.add_argument("--mc-res", type=int, help="marching-cubes resolution of the final mesh")
    g.add_argument("--width", type=int)
    g.add_argument("--depth", type=int)
    g.add_argument("--omega0", type=float)
    g.add_argument("--n-surface", type=int)
    g.add_argument("--n-offsurface", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="BLAS thread limit; 1 is deterministic")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fdsdf", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="fit a surface to a point cloud")
    p.add_argument("input")
    p.add_argument("-o", "--out", default="fdsdf_out")
    p.add_argument("--hausdorff-map", action="store_true",
                   help="store per-vertex distance to the input in mesh.ply")
    p.add_argument("-q", "--quiet", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify-stencils", help="check O(h^2) convergence on analytic shapes")
    p.add_argument("--steps", default="0.04,0.02,0.01,0.005")
    p.add_argument("--shapes", default="sphere,cylinder,torus,quadratic")
    p.add_argument("--n-points", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default="fdsdf_out")
    p.set_defaults(func=cmd_verify_stencils)

    p = sub.add_parser("sweep-lambda", help="reconstruct once per curvature weight")
    p.add_argument("input")
    p.add_argument("--lambdas", default="0.6,1,3")
    p.add_argument("-o", "--out", default="fdsdf_out")
    p.add_argument("-q", "--quiet", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("eval", help="score a mesh against a cloud or mesh")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--threshold", type=float, default=0.005)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default="fdsdf_out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle-cloud", help="write a point cloud sampled from an analytic shape")
    p.add_argument("shape", help="sphere, cylinder, torus, box or rounded_box")
    p.add_argument("output", help=".xyz, .obj or .ply")
    p.add_argument("-n", type=int, default=5000)
    p.add_argument("--normals", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_cloud)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        msg = str(exc)
        print(msg if msg.startswith("input not found") else f"input not found: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
