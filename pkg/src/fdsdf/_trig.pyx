# cython: language_level=3, boundscheck=False, wraparound=False
"""Sine and cosine of one array in a single pass.

Compiled with fast-math so gcc maps the loops onto glibc's libmvec SIMD
variants (accurate to a few ulp, same as scalar libm on these inputs).
"""

from libc.math cimport sin, cos


def sincos_flat(double[::1] z, double[::1] s, double[::1] c):
    # raw pointers and split loops let gcc map sin/cos onto libmvec SIMD variants
    cdef Py_ssize_t i, n = z.shape[0]
    if n == 0:
        return
    cdef double * zp = &z[0]
    cdef double * sp = &s[0]
    cdef double * cp = &c[0]
    with nogil:
        for i in range(n):
            sp[i] = sin(zp[i])
        for i in range(n):
            cp[i] = cos(zp[i])


def sin_flat(double[::1] z, double[::1] s):
    cdef Py_ssize_t i, n = z.shape[0]
    if n == 0:
        return
    cdef double * zp = &z[0]
    cdef double * sp = &s[0]
    with nogil:
        for i in range(n):
            sp[i] = sin(zp[i])
