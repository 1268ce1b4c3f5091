"""Compiled inner loops for series products."""
import numpy as np
from numba import njit


@njit(cache=True)
def sparse_cmul(la, ia, ja, ar, ai, aM, aR, lb, ib, jb, br, bi, bM, bR, nl, n):
    """Complex convolution of two sparse coefficient lists.

    Returns the real and imaginary midpoint sums, the radius sum
    aM*bR + aR*(bM + bR), the magnitude sum aM*bM and a hit count per cell.
    """
    re = np.zeros((nl, n, n))
    im = np.zeros((nl, n, n))
    rad = np.zeros((nl, n, n))
    mm = np.zeros((nl, n, n))
    hits = np.zeros((nl, n, n), dtype=np.int64)
    for p in range(la.size):
        xr = ar[p]
        xi = ai[p]
        xm = aM[p]
        xrad = aR[p]
        for q in range(lb.size):
            l = la[p] + lb[q]
            i = ia[p] + ib[q]
            j = ja[p] + jb[q]
            re[l, i, j] += xr * br[q] - xi * bi[q]
            im[l, i, j] += xr * bi[q] + xi * br[q]
            rad[l, i, j] += xm * bR[q] + xrad * (bM[q] + bR[q])
            mm[l, i, j] += xm * bM[q]
            hits[l, i, j] += 1
    return re, im, rad, mm, hits


# --- directed-rounding scalar primitives as ufuncs --------------------------
#
# Each native result is moved one float outward only when an error-free
# transformation shows it was inexact.

from numba import vectorize

_SPLIT = 134217729.0
_BIG = 2.0 ** 995
_TINY = 2.0 ** -960
_INF = np.inf


@njit(cache=True, inline="always")
def _two_sum_err(a, b, s):
    bb = s - a
    return (a - (s - bb)) + (b - bb)


@njit(cache=True, inline="always")
def _two_prod_err(a, b, p):
    c = _SPLIT * a
    ah = c - (c - a)
    al = a - ah
    c = _SPLIT * b
    bh = c - (c - b)
    bl = b - bh
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True, inline="always")
def _safe(a, b, p):
    return abs(a) < _BIG and abs(b) < _BIG and abs(p) > _TINY


@vectorize(["float64(float64, float64)"], cache=True)
def add_dn(a, b):
    s = a + b
    if _two_sum_err(a, b, s) < 0.0:
        return np.nextafter(s, -_INF)
    return s


@vectorize(["float64(float64, float64)"], cache=True)
def add_up(a, b):
    s = a + b
    if _two_sum_err(a, b, s) > 0.0:
        return np.nextafter(s, _INF)
    return s


@njit(cache=True, inline="always")
def _mul_dn(a, b):
    p = a * b
    if a == 0.0 or b == 0.0:
        return p
    if _safe(a, b, p) and _two_prod_err(a, b, p) >= 0.0:
        return p
    return np.nextafter(p, -_INF)


@njit(cache=True, inline="always")
def _mul_up(a, b):
    p = a * b
    if a == 0.0 or b == 0.0:
        return p
    if _safe(a, b, p) and _two_prod_err(a, b, p) <= 0.0:
        return p
    return np.nextafter(p, _INF)


@vectorize(["float64(float64, float64)"], cache=True)
def mul_dn(a, b):
    return _mul_dn(a, b)


@vectorize(["float64(float64, float64)"], cache=True)
def mul_up(a, b):
    return _mul_up(a, b)


@vectorize(["float64(float64, float64, float64, float64)"], cache=True)
def imul_lo(alo, ahi, blo, bhi):
    return min(min(_mul_dn(alo, blo), _mul_dn(alo, bhi)),
               min(_mul_dn(ahi, blo), _mul_dn(ahi, bhi)))


@vectorize(["float64(float64, float64, float64, float64)"], cache=True)
def imul_hi(alo, ahi, blo, bhi):
    return max(max(_mul_up(alo, blo), _mul_up(alo, bhi)),
               max(_mul_up(ahi, blo), _mul_up(ahi, bhi)))


@njit(cache=True, inline="always")
def _div_sign(a, b, q):
    # sign of a/b - q; 2 when undecidable
    p = q * b
    if not _safe(q, b, p):
        return 2
    e = _two_prod_err(q, b, p)
    r = a - p
    if not np.isfinite(r):
        return 2
    if r > e:
        sg = 1
    elif r < e:
        sg = -1
    else:
        return 0
    return sg if b > 0 else -sg


@vectorize(["float64(float64, float64)"], cache=True)
def div_dn(a, b):
    q = a / b
    if a == 0.0:
        return q
    sg = _div_sign(a, b, q)
    if sg == 0 or sg == 1:
        return q
    return np.nextafter(q, -_INF)


@vectorize(["float64(float64, float64)"], cache=True)
def div_up(a, b):
    q = a / b
    if a == 0.0:
        return q
    sg = _div_sign(a, b, q)
    if sg == 0 or sg == -1:
        return q
    return np.nextafter(q, _INF)


@vectorize(["float64(float64)"], cache=True)
def sqrt_dn(x):
    y = np.sqrt(x)
    if x == 0.0:
        return y
    p = y * y
    if _safe(y, y, p):
        e = _two_prod_err(y, y, p)
        if p < x or (p == x and e <= 0.0):
            return y
    return np.nextafter(y, -_INF)


@vectorize(["float64(float64)"], cache=True)
def sqrt_up(x):
    y = np.sqrt(x)
    if x == 0.0:
        return y
    p = y * y
    if _safe(y, y, p):
        e = _two_prod_err(y, y, p)
        if p > x or (p == x and e >= 0.0):
            return y
    return np.nextafter(y, _INF)
