# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Grid-hash nearest neighbour search.

Built without fast-math so distances are bitwise equal to the numpy path in
``fdsdf.kernels``.
"""

from libc.math cimport sqrt, floor, INFINITY


def grid_nearest(const double[:, ::1] query, const double[:, ::1] ref_sorted,
                 const long[::1] cell_start, const double[::1] origin,
                 double cell, long nx, long ny, long nz,
                 double[::1] out_dist, long[::1] out_idx):
    """Exact nearest neighbour by expanding Chebyshev rings of grid cells.

    ``ref_sorted`` is ordered by linear cell id; ``cell_start`` has
    ``nx*ny*nz + 1`` offsets into it.
    """
    cdef Py_ssize_t q, nq = query.shape[0]
    cdef long ci, cj, ck, i, j, k, ring, maxring, lin, p
    cdef double qx, qy, qz, dx, dy, dz, d2, best, bound
    maxring = nx
    if ny > maxring:
        maxring = ny
    if nz > maxring:
        maxring = nz
    with nogil:
        for q in range(nq):
            qx = query[q, 0]
            qy = query[q, 1]
            qz = query[q, 2]
            ci = <long>floor((qx - origin[0]) / cell)
            cj = <long>floor((qy - origin[1]) / cell)
            ck = <long>floor((qz - origin[2]) / cell)
            ci = 0 if ci < 0 else (nx - 1 if ci >= nx else ci)
            cj = 0 if cj < 0 else (ny - 1 if cj >= ny else cj)
            ck = 0 if ck < 0 else (nz - 1 if ck >= nz else ck)
            best = INFINITY
            out_idx[q] = -1
            ring = 0
            while ring <= maxring:
                for i in range(ci - ring, ci + ring + 1):
                    if i < 0 or i >= nx:
                        continue
                    for j in range(cj - ring, cj + ring + 1):
                        if j < 0 or j >= ny:
                            continue
                        for k in range(ck - ring, ck + ring + 1):
                            if k < 0 or k >= nz:
                                continue
                            if (i - ci != ring and ci - i != ring and j - cj != ring
                                    and cj - j != ring and k - ck != ring and ck - k != ring):
                                continue
                            lin = (i * ny + j) * nz + k
                            for p in range(cell_start[lin], cell_start[lin + 1]):
                                dx = qx - ref_sorted[p, 0]
                                dy = qy - ref_sorted[p, 1]
                                dz = qz - ref_sorted[p, 2]
                                d2 = dx * dx + dy * dy + dz * dz
                                if d2 < best:
                                    best = d2
                                    out_idx[q] = p
                # unvisited cells are at least ring*cell away
                bound = ring * cell * (1.0 - 1e-9)
                if best < INFINITY and sqrt(best) <= bound:
                    break
                ring += 1
            out_dist[q] = sqrt(best)
