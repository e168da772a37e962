"""Zero level-set extraction and reconstruction metrics.

Metrics follow the usual scaling for reports: Chamfer distance x1e3, F1 and
normal consistency x1e2.  Chamfer is the symmetric mean of unsquared
nearest-neighbour distances; normal consistency uses absolute cosines since
the inputs are unoriented.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from skimage import measure

from .kernels import GridIndex, brute_force_nearest
from .sampling import resample_mesh_surface, save


class EmptySurface(ValueError):
    """The field has no sign change on the extraction grid."""


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_normals: Optional[np.ndarray] = None

    def area(self) -> float:
        t = self.vertices[self.triangles]
        return 0.5 * float(np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1).sum())

    def face_normals(self) -> np.ndarray:
        t = self.vertices[self.triangles]
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def area_weighted_vertex_normals(self) -> np.ndarray:
        t = self.vertices[self.triangles]
        cr = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])  # length = 2 * area
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.triangles[:, k], cr)
        norm = np.linalg.norm(vn, axis=1, keepdims=True)
        return vn / np.where(norm > 0, norm, 1.0)

    def save(self, path, vertex_scalars: Optional[dict] = None) -> None:
        save(path, self.vertices, faces=self.triangles, vertex_scalars=vertex_scalars)

    def sample(self, n: int, rng: np.random.Generator):
        """(points, unit face normals) sampled uniformly by area."""
        pc = resample_mesh_surface(self.vertices, self.triangles, n, rng)
        return pc.points, pc.normals


def evaluate_grid(evaluator: Callable, resolution: int, lo=-1.0, hi=1.0,
                  chunk: int = 65536) -> np.ndarray:
    """Field values on a ``resolution^3`` lattice spanning ``[lo, hi]^3``."""
    g = np.linspace(lo, hi, resolution)
    vol = np.empty(resolution ** 3)
    ii, jj, kk = np.meshgrid(g, g, g, indexing="ij")
    pts = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    for s in range(0, pts.shape[0], chunk):
        vol[s:s + chunk] = np.asarray(evaluator(pts[s:s + chunk])).reshape(-1)
    return vol.reshape(resolution, resolution, resolution)


def _refine_on_edges(vol, idx, level):
    # skimage interpolates in float32; redo it in double along each vertex's grid edge
    idx = np.asarray(idx, dtype=np.float64)
    base = np.floor(idx + 1e-4).astype(np.int64)
    frac = idx - base
    axis = np.argmax(frac, axis=1)
    on_edge = frac[np.arange(len(idx)), axis] > 1e-4
    base = np.minimum(base, np.array(vol.shape) - 1)
    out = base.astype(np.float64)
    i = np.flatnonzero(on_edge)
    a = base[i]
    b = a.copy()
    b[np.arange(len(i)), axis[i]] += 1
    f0 = vol[a[:, 0], a[:, 1], a[:, 2]]
    f1 = vol[b[:, 0], b[:, 1], b[:, 2]]
    out[i, axis[i]] += (level - f0) / (f1 - f0)
    return out


def marching_cubes(evaluator: Callable, resolution: int = 128, domain=(-1.0, 1.0),
                   level: float = 0.0, gradient: Optional[Callable] = None) -> TriangleMesh:
    """Triangulate ``{f = level}`` inside the cube ``domain^3``.

    Triangles are wound so face normals follow ``+grad f`` (outward for a
    field that is negative inside).  Zero-area triangles are dropped.
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    lo, hi = domain
    vol = evaluate_grid(evaluator, resolution, lo, hi)
    if not (vol.min() < level < vol.max()):
        raise EmptySurface("field has no sign change on the grid")
    step = (hi - lo) / (resolution - 1)
    verts, faces, _, _ = measure.marching_cubes(vol, level=level, spacing=(step,) * 3,
                                                allow_degenerate=False)
    verts = _refine_on_edges(vol, verts / step, level) * step + lo
    faces = faces.astype(np.int64)
    mesh = TriangleMesh(verts, faces)
    t = verts[faces]
    cr = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
    keep = np.linalg.norm(cr, axis=1) > 0
    mesh.triangles = faces[keep]
    cr = cr[keep]
    centroids = verts[mesh.triangles].mean(axis=1)
    if gradient is not None:
        g = gradient(centroids)
    else:
        eps = 0.5 * step
        g = np.stack([(np.asarray(evaluator(centroids + e)) - np.asarray(evaluator(centroids - e)))
                      for e in np.eye(3) * eps], axis=1)
    flip = np.einsum("ij,ij->i", cr, g) < 0
    if flip.mean() > 0.5:  # skimage winds consistently; orient the whole mesh by majority
        mesh.triangles = mesh.triangles[:, ::-1].copy()
    mesh.vertex_normals = mesh.area_weighted_vertex_normals()
    return mesh


def _nonempty(*sets):
    for s in sets:
        if s is None or len(s) == 0:
            raise ValueError("empty point set")


def _nn(a, b, brute: bool = False):
    return brute_force_nearest(a, b) if brute else GridIndex(b).query(a)


def chamfer(a, b, brute: bool = False) -> float:
    """Symmetric mean nearest-neighbour distance (unscaled)."""
    _nonempty(a, b)
    d_ab, _ = _nn(a, b, brute)
    d_ba, _ = _nn(b, a, brute)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def hausdorff(a, b, brute: bool = False) -> float:
    _nonempty(a, b)
    d_ab, _ = _nn(a, b, brute)
    d_ba, _ = _nn(b, a, brute)
    return max(float(d_ab.max()), float(d_ba.max()))


def f1_score(pred, gt, threshold: float = 0.005) -> float:
    """Harmonic mean of precision and recall at ``threshold``, x1e2."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    _nonempty(pred, gt)
    d_pg, _ = _nn(pred, gt)
    d_gp, _ = _nn(gt, pred)
    precision = float((d_pg < threshold).mean())
    recall = float((d_gp < threshold).mean())
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def normal_consistency(pred_pts, pred_normals, gt_pts, gt_normals) -> float:
    """Symmetric mean ``|cos|`` between normals of nearest neighbours, x1e2."""
    _nonempty(pred_pts, gt_pts)
    for n in (pred_normals, gt_normals):
        if np.any(np.linalg.norm(n, axis=1) == 0):
            raise ValueError("zero-length normal")
    pn = pred_normals / np.linalg.norm(pred_normals, axis=1, keepdims=True)
    gn = gt_normals / np.linalg.norm(gt_normals, axis=1, keepdims=True)
    _, i_pg = _nn(pred_pts, gt_pts)
    _, i_gp = _nn(gt_pts, pred_pts)
    c1 = np.abs(np.einsum("ij,ij->i", pn, gn[i_pg])).mean()
    c2 = np.abs(np.einsum("ij,ij->i", gn, pn[i_gp])).mean()
    return 100.0 * 0.5 * float(c1 + c2)


@dataclass
class MetricsReport:
    cd_x1000: float
    f1_x100: float
    nc_x100: float
    hausdorff: float

    def table(self) -> str:
        rows = [("CD x1e3", self.cd_x1000), ("F1 x1e2", self.f1_x100),
                ("NC x1e2", self.nc_x100), ("Hausdorff", self.hausdorff)]
        return "\n".join(f"{k:<10} {v:12.5f}" for k, v in rows)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(asdict(self)))
            w.writeheader()
            w.writerow(asdict(self))


def evaluate(pred_pts, pred_normals, gt_pts, gt_normals=None,
             threshold: float = 0.005) -> MetricsReport:
    """All metrics for one prediction; NC is NaN without ground-truth normals."""
    _nonempty(pred_pts, gt_pts)
    ip = GridIndex(gt_pts)
    ig = GridIndex(pred_pts)
    d_pg, i_pg = ip.query(pred_pts)
    d_gp, i_gp = ig.query(gt_pts)
    cd = 0.5 * (float(d_pg.mean()) + float(d_gp.mean()))
    precision = float((d_pg < threshold).mean())
    recall = float((d_gp < threshold).mean())
    f1 = 0.0 if precision + recall == 0 else 100.0 * 2 * precision * recall / (precision + recall)
    nc = float("nan")
    if gt_normals is not None and pred_normals is not None:
        pn = pred_normals / np.linalg.norm(pred_normals, axis=1, keepdims=True)
        gn = gt_normals / np.linalg.norm(gt_normals, axis=1, keepdims=True)
        c1 = np.abs(np.einsum("ij,ij->i", pn, gn[i_pg])).mean()
        c2 = np.abs(np.einsum("ij,ij->i", gn, pn[i_gp])).mean()
        nc = 100.0 * 0.5 * float(c1 + c2)
    haus = max(float(d_pg.max()), float(d_gp.max()))
    return MetricsReport(1000.0 * cd, f1, nc, haus)


def evaluate_mesh(mesh: TriangleMesh, gt_pts, gt_normals=None, n_samples: int = 100_000,
                  threshold: float = 0.005, rng: Optional[np.random.Generator] = None) -> MetricsReport:
    rng = rng if rng is not None else np.random.default_rng(0)
    pts, nrm = mesh.sample(n_samples, rng)
    return evaluate(pts, nrm, gt_pts, gt_normals, threshold)


def per_vertex_distance(mesh: TriangleMesh, gt_pts) -> np.ndarray:
    """Distance of every mesh vertex to the ground truth (Hausdorff map data)."""
    d, _ = GridIndex(gt_pts).query(mesh.vertices)
    return d


def closest_point_on_triangles(p, a, b, c):
    """Closest points to ``p`` on triangles ``(a, b, c)``, all arrays (..., 3).

    Region tests follow the standard Voronoi-region walk over vertices,
    edges and face.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("...i,...i", ab, ap)
    d2 = np.einsum("...i,...i", ac, ap)
    bp = p - b
    d3 = np.einsum("...i,...i", ab, bp)
    d4 = np.einsum("...i,...i", ac, bp)
    cp = p - c
    d5 = np.einsum("...i,...i", ab, cp)
    d6 = np.einsum("...i,...i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + v[..., None] * ab + w[..., None] * ac  # interior
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    cases = [
        ((d1 <= 0) & (d2 <= 0), a),
        ((d3 >= 0) & (d4 <= d3), b),
        ((d6 >= 0) & (d5 <= d6), c),
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[..., None] * ab),
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[..., None] * ac),
        ((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + t_bc[..., None] * (c - b)),
    ]
    done = np.zeros(d1.shape, dtype=bool)
    for cond, val in cases:
        sel = cond & ~done
        out = np.where(sel[..., None], val, out)
        done |= sel
    return out


def _csr(keys, values, n):
    order = np.argsort(keys, kind="stable")
    start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=start[1:])
    return start, values[order]


def _two_ring(mesh: TriangleMesh, verts: np.ndarray):
    """CSR lists of the triangles sharing a vertex with the star of each vertex."""
    tri = mesh.triangles
    nv = mesh.vertices.shape[0]
    vt_start, vt = _csr(tri.ravel(), np.repeat(np.arange(len(tri)), 3), nv)
    cnt = vt_start[verts + 1] - vt_start[verts]
    # (query vertex, star triangle) -> star vertices -> their triangles
    q1 = np.repeat(np.arange(len(verts)), cnt)
    t1 = vt[_ranges(vt_start[verts], cnt)]
    v2 = tri[t1].ravel()
    q2 = np.repeat(q1, 3)
    cnt2 = vt_start[v2 + 1] - vt_start[v2]
    q3 = np.repeat(q2, cnt2)
    t3 = vt[_ranges(vt_start[v2], cnt2)]
    key = np.unique(q3.astype(np.int64) * len(tri) + t3)
    q, t = key // len(tri), key % len(tri)
    start = np.zeros(len(verts) + 1, dtype=np.int64)
    np.cumsum(np.bincount(q, minlength=len(verts)), out=start[1:])
    return start, t


def _ranges(starts, counts):
    """Concatenation of ``arange(s, s + c)`` for each pair."""
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(starts - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return offs + np.arange(total)


def point_mesh_distance(points, mesh: TriangleMesh, chunk: int = 2000) -> np.ndarray:
    """Distance from each point to the 2-ring of triangles around its nearest vertex.

    This is the exact distance to that patch, hence an upper bound on the
    distance to the whole mesh (tight for well-shaped extractions).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles
    _, nearest = GridIndex(mesh.vertices).query(points)
    uniq, inv = np.unique(nearest, return_inverse=True)
    start, cand = _two_ring(mesh, uniq)
    width = int(np.max(start[1:] - start[:-1]))
    out = np.empty(points.shape[0])
    k = np.arange(width)
    for s in range(0, points.shape[0], chunk):
        q = points[s:s + chunk]
        r = inv[s:s + chunk]
        n_c = start[r + 1] - start[r]
        ok = k[None, :] < n_c[:, None]
        f = cand[np.where(ok, start[r][:, None] + k[None, :], start[r][:, None])]
        t = mesh.vertices[tri[f]]  # (n, width, 3, 3)
        cp = closest_point_on_triangles(q[:, None, :], t[..., 0, :], t[..., 1, :], t[..., 2, :])
        d = np.linalg.norm(cp - q[:, None, :], axis=-1)
        out[s:s + chunk] = np.where(ok, d, np.inf).min(axis=1)
    return out


def evaluate_against_shape(mesh: TriangleMesh, shape, n_samples: int = 100_000,
                           n_reference: int = 100_000, threshold: float = 0.005,
                           unit: float = 1.0, rng: Optional[np.random.Generator] = None
                           ) -> MetricsReport:
    """Metrics of ``mesh`` against a closed-form shape.

    Both directions are free of sampling floors: mesh samples are scored by
    ``|sdf|`` and analytic surface samples by their distance to the mesh
    triangles.  Distances are divided by ``unit`` before scoring, so a mesh
    in object coordinates can be scored in normalized units.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    pts, nrm = mesh.sample(n_samples, rng)
    ref = shape.sample_surface(n_reference, rng)
    ref_n = shape.normals(ref)
    d_pg = np.abs(shape.sdf(pts)) / unit
    d_gp = point_mesh_distance(ref, mesh) / unit
    _, i_gp = GridIndex(pts).query(ref)
    cd = 0.5 * (float(d_pg.mean()) + float(d_gp.mean()))
    precision = float((d_pg < threshold).mean())
    recall = float((d_gp < threshold).mean())
    f1 = 0.0 if precision + recall == 0 else 100.0 * 2 * precision * recall / (precision + recall)
    g = shape.gradient(pts)
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    c1 = np.abs(np.einsum("ij,ij->i", nrm, g)).mean()
    c2 = np.abs(np.einsum("ij,ij->i", ref_n, nrm[i_gp])).mean()
    nc = 100.0 * 0.5 * float(c1 + c2)
    return MetricsReport(1000.0 * cd, f1, nc, max(float(d_pg.max()), float(d_gp.max())))
