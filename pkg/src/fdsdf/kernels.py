"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extensions (``fdsdf._trig``, ``fdsdf._kernels``) are used when they import and
``FDSDF_PURE_PYTHON`` is not set.  Both backends return identical results:
the fused sine/cosine agrees to libm rounding, the nearest-neighbour search
is exact in both.
"""

from __future__ import annotations

import os

import numpy as np

_ext = _trig = None
if not os.environ.get("FDSDF_PURE_PYTHON"):
    try:
        from . import _kernels as _ext
        from . import _trig
    except ImportError:
        _ext = _trig = None

BACKEND = "compiled" if _ext is not None else "python"


def sincos(z, backend=None):
    """``(sin z, cos z)`` for an array of any shape."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    if _pick(backend) == "compiled":
        s = np.empty_like(z)
        c = np.empty_like(z)
        _trig.sincos_flat(z.reshape(-1), s.reshape(-1), c.reshape(-1))
        return s, c
    return np.sin(z), np.cos(z)


def sin(z, backend=None):
    z = np.ascontiguousarray(z, dtype=np.float64)
    if _pick(backend) == "compiled":
        s = np.empty_like(z)
        _trig.sin_flat(z.reshape(-1), s.reshape(-1))
        return s
    return np.sin(z)


def _pick(backend):
    backend = backend or BACKEND
    if backend == "compiled" and _ext is None:
        raise RuntimeError("compiled kernels are not available")
    return backend


class GridIndex:
    """Uniform-grid spatial hash over a fixed reference set."""

    def __init__(self, ref, max_cells_per_axis: int = 128):
        ref = np.ascontiguousarray(ref, dtype=np.float64).reshape(-1, 3)
        if ref.shape[0] == 0:
            raise ValueError("empty reference set")
        lo = ref.min(axis=0)
        hi = ref.max(axis=0)
        extent = float(np.max(hi - lo))
        if extent == 0.0:
            extent = 1.0
        res = int(np.clip(round(np.sqrt(ref.shape[0]) / 2), 1, max_cells_per_axis))
        self.cell = extent / res
        self.origin = lo
        self.dims = np.maximum(np.ceil((hi - lo) / self.cell).astype(np.int64), 1)
        ijk = self._cells(ref)
        lin = (ijk[:, 0] * self.dims[1] + ijk[:, 1]) * self.dims[2] + ijk[:, 2]
        order = np.argsort(lin, kind="stable")
        self.order = order
        self.ref = ref
        self.ref_sorted = np.ascontiguousarray(ref[order])
        n_cells = int(np.prod(self.dims))
        counts = np.bincount(lin, minlength=n_cells)
        self.cell_start = np.zeros(n_cells + 1, dtype=np.int64)
        np.cumsum(counts, out=self.cell_start[1:])

    def _cells(self, pts):
        ijk = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        return np.clip(ijk, 0, self.dims - 1)

    def query(self, pts, backend=None):
        """Nearest distance and reference index for each point."""
        pts = np.ascontiguousarray(pts, dtype=np.float64).reshape(-1, 3)
        if _pick(backend) == "compiled":
            dist = np.empty(pts.shape[0])
            idx = np.empty(pts.shape[0], dtype=np.int64)
            nx, ny, nz = (int(d) for d in self.dims)
            _ext.grid_nearest(pts, self.ref_sorted, self.cell_start, self.origin,
                              self.cell, nx, ny, nz, dist, idx)
        else:
            dist, idx = self._query_numpy(pts)
        return dist, self.order[idx]

    def _query_numpy(self, pts):
        n = pts.shape[0]
        best = np.full(n, np.inf)
        arg = np.full(n, -1, dtype=np.int64)
        ijk = self._cells(pts)
        dims = self.dims
        ref = self.ref_sorted
        for off in np.array(np.meshgrid([-1, 0, 1], [-1, 0, 1], [-1, 0, 1], indexing="ij")).reshape(3, -1).T:
            nb = ijk + off
            ok = np.all((nb >= 0) & (nb < dims), axis=1)
            lin = (nb[:, 0] * dims[1] + nb[:, 1]) * dims[2] + nb[:, 2]
            lin = np.where(ok, lin, 0)
            start = self.cell_start[lin]
            count = np.where(ok, self.cell_start[lin + 1] - start, 0)
            for k in range(int(count.max(initial=0))):
                sel = np.flatnonzero(count > k)
                p = start[sel] + k
                dx = pts[sel, 0] - ref[p, 0]
                dy = pts[sel, 1] - ref[p, 1]
                dz = pts[sel, 2] - ref[p, 2]
                d2 = dx * dx + dy * dy + dz * dz
                better = d2 < best[sel]
                best[sel[better]] = d2[better]
                arg[sel[better]] = p[better]
        # points further than one cell may have a closer match outside the 3x3x3 block
        todo = np.flatnonzero(~(np.sqrt(best) <= self.cell * (1.0 - 1e-9)))
        if todo.size:
            d2, i = _brute_d2(pts[todo], ref)
            better = d2 < best[todo]
            best[todo[better]] = d2[better]
            arg[todo[better]] = i[better]
        return np.sqrt(best), arg


def brute_force_nearest(query, ref):
    """O(n*m) nearest neighbour; the oracle for :class:`GridIndex`."""
    query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1, 3)
    if query.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("empty point set")
    d2, idx = _brute_d2(query, ref)
    return np.sqrt(d2), idx


def _brute_d2(query, ref, chunk: int = 2048):
    best = np.empty(query.shape[0])
    idx = np.empty(query.shape[0], dtype=np.int64)
    step = max(1, chunk * 1024 // max(ref.shape[0], 1))
    for s in range(0, query.shape[0], step):
        q = query[s:s + step]
        dx = q[:, None, 0] - ref[None, :, 0]
        dy = q[:, None, 1] - ref[None, :, 1]
        dz = q[:, None, 2] - ref[None, :, 2]
        d2 = dx * dx + dy * dy + dz * dz
        k = np.argmin(d2, axis=1)
        idx[s:s + step] = k
        best[s:s + step] = d2[np.arange(q.shape[0]), k]
    return best, idx


def nearest(query, ref, backend=None):
    return GridIndex(ref).query(query, backend)
