"""Pure-Python reference kernels.

Every routine here has a twin in ``_kernels.pyx`` with identical summation
order, so the two backends agree bit for bit.
"""
from array import array
from math import exp, isfinite


def matmul(a, b, n, m, p):
    out = array("d", bytes(8 * n * p))
    for i in range(n):
        ra = i * m
        ro = i * p
        for j in range(p):
            s = 0.0
            for t in range(m):
                s += a[ra + t] * b[t * p + j]
            out[ro + j] = s
    return out


def matmul_nt(a, b, n, m, p):
    """a (n x m) times transpose of b (p x m)."""
    out = array("d", bytes(8 * n * p))
    for i in range(n):
        ra = i * m
        ro = i * p
        for j in range(p):
            rb = j * m
            s = 0.0
            for t in range(m):
                s += a[ra + t] * b[rb + t]
            out[ro + j] = s
    return out


def masked_softmax(scores, allow, n, m):
    out = array("d", bytes(8 * n * m))
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
                out[r + j] = e
                total += e
        for j in range(m):
            if allow[r + j]:
                out[r + j] = out[r + j] / total
    return out


def all_finite(data):
    for v in data:
        if not isfinite(v):
            return False
    return True


def dal_sum(g, d):
    """Sum of g'_d(t) - (t-1)d under the max recursion."""
    total = 0.0
    prev = 0.0
    for t in range(len(g)):
        cur = g[t] if t == 0 else max(g[t], prev + d)
        total += cur - t * d
        prev = cur
    return total
