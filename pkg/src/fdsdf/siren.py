"""Sinusoidal MLP ``f: R^3 -> R`` with SIREN initialization.

Hidden layers compute ``sin(omega0 * (W a + b))``; the output layer is
linear.  Spatial gradients are propagated in forward mode alongside the
value so that ``grad_x f`` is itself a tape node.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import kernels
from .ad_engine import ScalarNode, TangentTriple, Tape

_AXES = np.eye(3)[:, None, :]  # (3, 1, 3) unit input tangents
_CKPT_MAGIC = b"FDSDFCKPT1"


@dataclass
class SirenParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    omega0: float = 30.0
    seed: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        """Number of hidden (sine) layers."""
        return len(self.weights) - 1

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    def arrays(self) -> List[np.ndarray]:
        """Parameters in checkpoint order: W0, b0, W1, b1, ..., Wout, bout."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def with_arrays(self, arrays: List[np.ndarray]) -> "SirenParams":
        ws = [np.array(a, dtype=np.float64) for a in arrays[0::2]]
        bs = [np.array(a, dtype=np.float64) for a in arrays[1::2]]
        return SirenParams(ws, bs, self.omega0, self.seed)

    def copy(self) -> "SirenParams":
        return self.with_arrays(self.arrays())

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init(seed: int = 0, width: int = 256, depth: int = 4, omega0: float = 30.0,
         in_dim: int = 3, output_gain: float = 1.0) -> SirenParams:
    """SIREN initialization.

    The first layer is uniform in ``[-1/in, 1/in]``; hidden layers in
    ``[-sqrt(6/in)/omega0, sqrt(6/in)/omega0]``.  The linear output layer
    has no sine after it, so it drops the ``1/omega0`` factor; ``output_gain``
    rescales it (training uses ``1/omega0``, which starts from a flatter field).
    Biases use the default linear-layer scheme ``U(-1/sqrt(in), 1/sqrt(in))``.
    """
    if width < 1 or depth < 1:
        raise ValueError("width and depth must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = in_dim
    for layer in range(depth + 1):
        out = 1 if layer == depth else width
        if layer == 0:
            bound = 1.0 / fan_in
        elif layer == depth:
            bound = np.sqrt(6.0 / fan_in) * output_gain
        else:
            bound = np.sqrt(6.0 / fan_in) / omega0
        weights.append(rng.uniform(-bound, bound, size=(out, fan_in)))
        bb = 1.0 / np.sqrt(fan_in)
        biases.append(rng.uniform(-bb, bb, size=(out,)))
        fan_in = out
    return SirenParams(weights, biases, float(omega0), seed)


def _check_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != 3:
        raise ValueError(f"expected points of shape (N, 3), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input point")
    return x


def forward(params: SirenParams, x, chunk: int = 16384) -> np.ndarray:
    """Plain numpy evaluation, no tape. Returns shape (N,)."""
    x = _check_points(x)
    out = np.empty(x.shape[0])
    w0 = params.omega0
    for s in range(0, x.shape[0], chunk):
        a = x[s:s + chunk]
        for W, b in zip(params.weights[:-1], params.biases[:-1]):
            z = a @ W.T
            z += b
            z *= w0
            a = kernels.sin(z)
        out[s:s + chunk] = (a @ params.weights[-1].T + params.biases[-1])[:, 0]
    return out


def forward_with_gradient(params: SirenParams, x, chunk: int = 8192):
    """Numpy value and spatial gradient, shapes (N,) and (N, 3)."""
    x = _check_points(x)
    val = np.empty(x.shape[0])
    grad = np.empty((x.shape[0], 3))
    w0 = params.omega0
    Wf, bf = params.weights[-1], params.biases[-1]
    for s in range(0, x.shape[0], chunk):
        a = x[s:s + chunk]
        da = None  # (3, n, width) tangents along the input axes
        for W, b in zip(params.weights[:-1], params.biases[:-1]):
            sn, cs = kernels.sincos(w0 * (a @ W.T + b))
            lin = W.T[:, None, :] if da is None else da @ W.T
            da = (w0 * cs)[None] * lin
            a = sn
        val[s:s + chunk] = (a @ Wf.T + bf)[:, 0]
        grad[s:s + chunk] = (da @ Wf.T)[..., 0].T
    return val, grad


class TapedSiren:
    """A parameter set bound to one tape as leaf nodes."""

    def __init__(self, params: SirenParams, tape: Tape):
        self.params = params
        self.tape = tape
        self.W = [tape.leaf(w) for w in params.weights]
        self.b = [tape.leaf(b) for b in params.biases]
        self.n_evals = 0

    def leaves(self) -> List[ScalarNode]:
        out = []
        for w, b in zip(self.W, self.b):
            out.extend([w, b])
        return out

    def __call__(self, x) -> ScalarNode:
        return self.eval(x)

    def eval(self, x) -> ScalarNode:
        x = _check_points(x)
        self.n_evals += x.shape[0]
        a = self.tape.const(x)
        for W, b in zip(self.W[:-1], self.b[:-1]):
            a = (self.tape.record("affine", [a, W, b]) * self.params.omega0).sin()
        out = self.tape.record("affine", [a, self.W[-1], self.b[-1]])
        return out.reshape(-1)

    def eval_with_gradient(self, x) -> TangentTriple:
        x = _check_points(x)
        self.n_evals += x.shape[0]
        tape = self.tape
        w0 = self.params.omega0
        a = tape.const(x)
        tangents = [tape.const(_AXES[k]) for k in range(3)]
        for W, b in zip(self.W[:-1], self.b[:-1]):
            z = tape.record("affine", [a, W, b]) * w0
            dsin = z.cos() * w0
            tangents = [dsin * tape.record("linear", [t, W]) for t in tangents]
            a = z.sin()
        value = tape.record("affine", [a, self.W[-1], self.b[-1]]).reshape(-1)
        parts = [tape.record("linear", [t, self.W[-1]]).reshape(-1) for t in tangents]
        return TangentTriple(value, *parts)

    def eval_with_fd_gradient(self, x, delta: float = 1e-4) -> TangentTriple:
        """Spatial gradient by central differences (6 extra evaluations)."""
        x = _check_points(x)
        value = self.eval(x)
        parts = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = delta
            parts.append((self.eval(x + e) - self.eval(x - e)) * (0.5 / delta))
        return TangentTriple(value, *parts)


def eval(params: SirenParams, x, tape: Tape) -> ScalarNode:  # noqa: A001
    return TapedSiren(params, tape).eval(x)


def eval_with_gradient(params: SirenParams, x, tape: Tape) -> TangentTriple:
    return TapedSiren(params, tape).eval_with_gradient(x)


def save_checkpoint(params: SirenParams, path) -> None:
    """Write a binary checkpoint.

    Layout: magic, one ascii header line ``depth width omega0 seed in_dim``,
    then every array of :meth:`SirenParams.arrays` as little-endian float64,
    row-major, in order.
    """
    header = f"{params.depth} {params.width} {params.omega0!r} {params.seed} {params.weights[0].shape[1]}\n"
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC + b"\n" + header.encode("ascii"))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> SirenParams:
    raw = Path(path).read_bytes()
    magic, header, body = raw.split(b"\n", 2)
    if magic != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    depth, width, omega0, seed, in_dim = header.decode("ascii").split()
    template = init(int(seed), int(width), int(depth), float(omega0), int(in_dim))
    flat = np.frombuffer(body, dtype="<f8")
    need = template.n_params()
    if flat.size != need:
        raise ValueError(f"{path}: expected {need} values, found {flat.size}")
    arrays, off = [], 0
    for a in template.arrays():
        arrays.append(flat[off:off + a.size].reshape(a.shape).copy())
        off += a.size
    return template.with_arrays(arrays)
