"""Point-cloud I/O, normalization and per-iteration batch sampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np


class CloudParseError(ValueError):
    """Malformed point-cloud or mesh file."""


@dataclass
class PointCloud:
    points: np.ndarray
    normals: Optional[np.ndarray] = None
    faces: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.points.shape[0] == 0:
            raise ValueError("empty point cloud")

    @property
    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class NormalizedCloud:
    """Points in [-0.9, 0.9]^3; ``object = points * scale + translate``."""

    points: np.ndarray
    scale: float
    translate: np.ndarray
    normals: Optional[np.ndarray] = None

    def to_object(self, x) -> np.ndarray:
        return np.asarray(x) * self.scale + self.translate

    def to_normalized(self, x) -> np.ndarray:
        return (np.asarray(x) - self.translate) / self.scale


# ----------------------------------------------------------------------------
# readers

def _parse_floats(line: str, lineno: int, path) -> list:
    try:
        vals = [float(t) for t in line.split()]
    except ValueError:
        raise CloudParseError(f"{path}:{lineno}: cannot parse numbers from {line.strip()!r}")
    if not all(np.isfinite(vals)):
        raise CloudParseError(f"{path}:{lineno}: non-finite coordinate")
    return vals


def _read_xyz(path) -> PointCloud:
    pts, nrm = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            vals = _parse_floats(line, lineno, path)
            if len(vals) not in (3, 6):
                raise CloudParseError(f"{path}:{lineno}: expected 3 or 6 values, got {len(vals)}")
            pts.append(vals[:3])
            if len(vals) == 6:
                nrm.append(vals[3:])
    if not pts:
        raise CloudParseError(f"{path}: no points")
    normals = np.array(nrm) if len(nrm) == len(pts) else None
    return PointCloud(np.array(pts), normals)


def _read_obj(path) -> PointCloud:
    verts, faces, vn = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                vals = _parse_floats(" ".join(parts[1:4]), lineno, path)
                if len(vals) != 3:
                    raise CloudParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append(vals)
            elif tag == "vn":
                vn.append(_parse_floats(" ".join(parts[1:4]), lineno, path))
            elif tag == "f":
                try:
                    idx = [int(t.split("/")[0]) for t in parts[1:]]
                except ValueError:
                    raise CloudParseError(f"{path}:{lineno}: bad face record")
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise CloudParseError(f"{path}: no vertices")
    faces_arr = np.array(faces, dtype=np.int64) if faces else None
    if faces_arr is not None and (faces_arr.min() < 0 or faces_arr.max() >= len(verts)):
        raise CloudParseError(f"{path}: face index out of range")
    normals = np.array(vn) if len(vn) == len(verts) else None
    return PointCloud(np.array(verts), normals, faces_arr)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _read_ply(path) -> PointCloud:
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise CloudParseError(f"{path}:1: not a PLY file")
    header_lines = raw[:end].decode("ascii", errors="replace").splitlines()
    body = raw[end + len(b"end_header"):]
    body = body[body.find(b"\n") + 1:]
    fmt = None
    elements = []  # (name, count, [(prop name, dtype) or (name, count dtype, item dtype)])
    for lineno, line in enumerate(header_lines, 1):
        t = line.split()
        if not t:
            continue
        if t[0] == "format":
            fmt = t[1]
        elif t[0] == "element":
            elements.append((t[1], int(t[2]), []))
        elif t[0] == "property":
            if not elements:
                raise CloudParseError(f"{path}:{lineno}: property before element")
            try:
                if t[1] == "list":
                    elements[-1][2].append((t[4], _PLY_TYPES[t[2]], _PLY_TYPES[t[3]]))
                else:
                    elements[-1][2].append((t[2], _PLY_TYPES[t[1]]))
            except (KeyError, IndexError):
                raise CloudParseError(f"{path}:{lineno}: unsupported property {line!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise CloudParseError(f"{path}: unsupported PLY format {fmt!r}")

    data = {}
    if fmt == "ascii":
        lines = body.decode("ascii").splitlines()
        pos = 0
        base = len(header_lines) + 1
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                while pos < len(lines) and not lines[pos].strip():
                    pos += 1
                if pos >= len(lines):
                    raise CloudParseError(f"{path}:{base + pos}: unexpected end of data")
                vals = lines[pos].split()
                lineno = base + pos + 1
                pos += 1
                row, k = [], 0
                try:
                    for prop in props:
                        if len(prop) == 3:
                            n = int(vals[k])
                            row.append([float(x) for x in vals[k + 1:k + 1 + n]])
                            k += 1 + n
                        else:
                            row.append(float(vals[k]))
                            k += 1
                except (ValueError, IndexError):
                    raise CloudParseError(f"{path}:{lineno}: malformed {name} record")
                rows.append(row)
            data[name] = (props, rows)
    else:
        off = 0
        for name, count, props in elements:
            if all(len(p) == 2 for p in props):
                dt = np.dtype([(p[0], "<" + p[1]) for p in props])
                arr = np.frombuffer(body, dtype=dt, count=count, offset=off)
                off += dt.itemsize * count
                rows = [[arr[p[0]][i] for p in props] for i in range(count)] if name != "vertex" else arr
            else:
                rows = []
                for _ in range(count):
                    row = []
                    for prop in props:
                        if len(prop) == 3:
                            ct = np.dtype("<" + prop[1])
                            n = int(np.frombuffer(body, ct, 1, off)[0])
                            off += ct.itemsize
                            it = np.dtype("<" + prop[2])
                            row.append(list(np.frombuffer(body, it, n, off)))
                            off += it.itemsize * n
                        else:
                            it = np.dtype("<" + prop[1])
                            row.append(np.frombuffer(body, it, 1, off)[0])
                            off += it.itemsize
                    rows.append(row)
            data[name] = (props, rows)

    if "vertex" not in data:
        raise CloudParseError(f"{path}: no vertex element")
    props, rows = data["vertex"]
    names = [p[0] for p in props]
    if not {"x", "y", "z"} <= set(names):
        raise CloudParseError(f"{path}: vertex element lacks x/y/z")
    if isinstance(rows, np.ndarray):
        col = lambda k: np.asarray(rows[k], dtype=np.float64)
    else:
        table = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
        col = lambda k: table[:, names.index(k)]
    pts = np.stack([col("x"), col("y"), col("z")], axis=1)
    bad = np.flatnonzero(~np.isfinite(pts).all(axis=1))
    if bad.size:
        raise CloudParseError(f"{path}: non-finite coordinate in vertex {bad[0]}")
    normals = None
    if {"nx", "ny", "nz"} <= set(names):
        normals = np.stack([col("nx"), col("ny"), col("nz")], axis=1)
    faces = None
    if "face" in data:
        fprops, frows = data["face"]
        li = [i for i, p in enumerate(fprops) if len(p) == 3]
        if li:
            tris = []
            for row in frows:
                idx = [int(i) for i in row[li[0]]]
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
            faces = np.array(tris, dtype=np.int64) if tris else None
    return PointCloud(pts, normals, faces)


def load(path, fmt: Optional[str] = None) -> PointCloud:
    """Read ``.xyz``, ``.ply`` (ascii or binary little-endian) or ``.obj``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    readers = {"xyz": _read_xyz, "txt": _read_xyz, "ply": _read_ply, "obj": _read_obj}
    if fmt not in readers:
        raise CloudParseError(f"{path}: unknown format {fmt!r}")
    return readers[fmt](path)


# ----------------------------------------------------------------------------
# writers

def save(path, points, normals=None, faces=None, fmt: Optional[str] = None,
         binary: bool = False, vertex_scalars: Optional[dict] = None) -> None:
    """Write points (and optional normals, faces, per-vertex scalars)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    points = np.asarray(points, dtype=np.float64)
    if fmt in ("xyz", "txt"):
        data = points if normals is None else np.hstack([points, normals])
        np.savetxt(path, data, fmt="%.17g")
    elif fmt == "obj":
        with open(path, "w") as fh:
            np.savetxt(fh, points, fmt="v %.17g %.17g %.17g")
            if normals is not None:
                np.savetxt(fh, np.asarray(normals), fmt="vn %.17g %.17g %.17g")
            if faces is not None:
                np.savetxt(fh, np.asarray(faces, dtype=np.int64) + 1, fmt="f %d %d %d")
    elif fmt == "ply":
        _write_ply(path, points, normals, faces, binary, vertex_scalars or {})
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def _write_ply(path, points, normals, faces, binary, scalars):
    cols = [("x", points[:, 0]), ("y", points[:, 1]), ("z", points[:, 2])]
    if normals is not None:
        cols += [("nx", normals[:, 0]), ("ny", normals[:, 1]), ("nz", normals[:, 2])]
    cols += [(k, np.asarray(v, dtype=np.float64)) for k, v in scalars.items()]
    n_faces = 0 if faces is None else len(faces)
    head = ["ply", "format %s 1.0" % ("binary_little_endian" if binary else "ascii"),
            f"element vertex {len(points)}"]
    head += [f"property double {k}" for k, _ in cols]
    if n_faces:
        head += [f"element face {n_faces}", "property list uchar int vertex_indices"]
    head.append("end_header")
    table = np.stack([c for _, c in cols], axis=1)
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(table, dtype="<f8").tobytes())
            if n_faces:
                rec = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
                arr = np.empty(n_faces, dtype=rec)
                arr["n"] = 3
                arr["i"] = faces
                fh.write(arr.tobytes())
        else:
            lines = [" ".join("%.17g" % v for v in row) for row in table]
            if n_faces:
                lines += ["3 %d %d %d" % tuple(f) for f in faces]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


# ----------------------------------------------------------------------------
# normalization and batches

def normalize(cloud, extent: float = 1.8) -> NormalizedCloud:
    """Center the bbox and scale its longest side to ``extent``."""
    pts = cloud.points if isinstance(cloud, (PointCloud, NormalizedCloud)) else np.asarray(cloud)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    longest = float(np.max(hi - lo))
    if not longest > 0:
        raise ValueError("degenerate cloud: all points identical")
    translate = 0.5 * (lo + hi)
    scale = longest / extent
    normals = getattr(cloud, "normals", None)
    return NormalizedCloud((pts - translate) / scale, scale, translate, normals)


def sample_batches(cloud: NormalizedCloud, n_surface: int, n_offsurface: int,
                   shell_sigma: float, rng: np.random.Generator, n_shell: Optional[int] = None):
    """Surface, uniform off-surface and noisy shell batches for one iteration.

    The shell batch perturbs the first ``n_shell`` surface samples (all of
    them by default) with isotropic Gaussian noise.
    """
    from .losses import Batches

    n_pts = cloud.points.shape[0]
    idx = rng.choice(n_pts, size=n_surface, replace=n_pts < n_surface)
    surface = cloud.points[idx]
    off = rng.uniform(-1.0, 1.0, size=(n_offsurface, 3))
    base = surface if n_shell is None else surface[:n_shell]
    shell = base + rng.normal(0.0, shell_sigma, size=base.shape) if shell_sigma > 0 else base.copy()
    return Batches(surface, off, shell)


def resample_mesh_surface(vertices, faces, n: int, rng: np.random.Generator,
                          return_normals: bool = False):
    """Area-weighted uniform samples on a triangle mesh.

    Returns a :class:`PointCloud` whose ``normals`` are the unit face normals
    of the sampled triangles.
    """
    if n <= 0:
        raise ValueError("need at least one sample")
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    tri = v[f]
    cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    dbl = np.linalg.norm(cr, axis=1)
    total = dbl.sum()
    if not total > 0:
        raise ValueError("mesh has zero total area")
    which = rng.choice(len(f), size=n, p=dbl / total)
    r = rng.random((n, 2))
    flip = r.sum(axis=1) > 1.0
    r[flip] = 1.0 - r[flip]
    t = tri[which]
    pts = t[:, 0] + r[:, :1] * (t[:, 1] - t[:, 0]) + r[:, 1:] * (t[:, 2] - t[:, 0])
    nrm = cr[which] / dbl[which, None]
    return PointCloud(pts, nrm)
