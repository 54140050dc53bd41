# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same loop order as ``_kernels_py``; no fast-math."""
from array import array
from libc.math cimport exp, isfinite


def matmul(double[::1] a, double[::1] b, Py_ssize_t n, Py_ssize_t m, Py_ssize_t p):
    out = array("d", bytes(8 * n * p))
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, t
    cdef double s
    for i in range(n):
        for j in range(p):
            s = 0.0
            for t in range(m):
                s += a[i * m + t] * b[t * p + j]
            o[i * p + j] = s
    return out


def matmul_nt(double[::1] a, double[::1] b, Py_ssize_t n, Py_ssize_t m, Py_ssize_t p):
    out = array("d", bytes(8 * n * p))
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, t
    cdef double s
    for i in range(n):
        for j in range(p):
            s = 0.0
            for t in range(m):
                s += a[i * m + t] * b[j * m + t]
            o[i * p + j] = s
    return out


def masked_softmax(double[::1] scores, const unsigned char[::1] allow, Py_ssize_t n, Py_ssize_t m):
    out = array("d", bytes(8 * n * m))
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, r
    cdef double best, total, e, v
    cdef bint seen
    for i in range(n):
        r = i * m
        best = 0.0
        seen = False
        for j in range(m):
            if allow[r + j]:
                v = scores[r + j]
                if not seen or v > best:
                    best = v
                    seen = True
        if not seen:
            raise ValueError(f"row {i} of the attention mask allows no column")
        total = 0.0
        for j in range(m):
            if allow[r + j]:
                e = exp(scores[r + j] - best)
                o[r + j] = e
                total += e
        for j in range(m):
            if allow[r + j]:
                o[r + j] = o[r + j] / total
    return out


def all_finite(double[::1] data):
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        if not isfinite(data[i]):
            return False
    return True


def dal_sum(double[::1] g, double d):
    cdef Py_ssize_t t
    cdef double total = 0.0, prev = 0.0, cur
    for t in range(g.shape[0]):
        if t == 0:
            cur = g[t]
        else:
            cur = g[t] if g[t] > prev + d else prev + d
        total += cur - t * d
        prev = cur
    return total
