"""Validated interval arithmetic on numpy arrays.

Every :class:`Interval` holds two float arrays ``lo`` and ``hi`` of the same
shape.  A 0-d array plays the role of a scalar interval.  Outward rounding is
obtained by moving the native result one float towards -inf or +inf, but only
when an error-free transformation shows that the native result was inexact.
This keeps exact results (sums of zeros, products by powers of two, ...)
exact, which matters for the "all bounds are zero" cases of the pipeline.

No global floating-point state is touched, so the functions are thread safe.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

__all__ = [
    "Interval",
    "IntervalError",
    "DomainError",
    "IntervalOverflow",
    "iv",
    "iv_from_decimal",
    "exp",
    "log",
    "sqrt",
    "root",
    "pow_int",
    "imin",
    "imax",
    "hull",
    "isum",
    "pi",
    "golden",
]

_U = 2.0 ** -53          # unit roundoff
_ETA = 2.0 ** -1074      # smallest subnormal


class IntervalError(ArithmeticError):
    """Base class for interval failures."""


class DomainError(IntervalError, ValueError):
    pass


class IntervalOverflow(IntervalError, OverflowError):
    pass


def _down(x):
    return np.nextafter(x, -np.inf)


def _up(x):
    return np.nextafter(x, np.inf)


# --- directed rounding (compiled ufuncs) ------------------------------------

from . import _kernels as _k

add_down = _k.add_dn
add_up = _k.add_up
mul_down = _k.mul_dn
mul_up = _k.mul_up
div_down = _k.div_dn
div_up = _k.div_up
sqrt_down = _k.sqrt_dn
sqrt_up = _k.sqrt_up


def sub_down(a, b):
    return _k.add_dn(a, np.negative(b))


def sub_up(a, b):
    return _k.add_up(a, np.negative(b))


# --- the interval type -----------------------------------------------------

def _as_pair(x):
    if isinstance(x, Interval):
        return x.lo, x.hi
    a = np.asarray(x, dtype=float)
    return a, a


class Interval:
    """Array of closed intervals ``[lo, hi]`` with outward rounding.

    Plain floats and numpy arrays mixed into arithmetic are taken as exact
    point values.  Decimal constants such as 0.1 must go through
    :func:`iv_from_decimal` to be enclosed properly.
    """

    __slots__ = ("lo", "hi")
    __array_priority__ = 1000

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=float)
        hi = lo if hi is None else np.asarray(hi, dtype=float)
        if lo.shape != hi.shape:
            lo, hi = np.broadcast_arrays(lo, hi)
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise IntervalOverflow("non-finite interval endpoint")
        if not (lo <= hi).all():
            raise DomainError("interval with lo > hi")
        # normalise -0.0 so that serialisation is canonical
        self.lo = lo + 0.0
        self.hi = hi + 0.0

    # construction helpers
    @classmethod
    def zeros(cls, shape=()):
        z = np.zeros(shape)
        return cls(z, z.copy())

    @classmethod
    def from_fraction(cls, q: Fraction) -> "Interval":
        q = Fraction(q)
        f = float(q)
        fq = Fraction(f)
        if fq == q:
            return cls(f, f)
        if fq < q:
            return cls(f, float(_up(f)))
        return cls(float(_down(f)), f)

    # basic properties
    @property
    def shape(self):
        return self.lo.shape

    @property
    def ndim(self):
        return self.lo.ndim

    def __len__(self):
        return len(self.lo)

    def __getitem__(self, idx):
        return Interval(self.lo[idx], self.hi[idx])

    def __setitem__(self, idx, value):
        vlo, vhi = _as_pair(value)
        self.lo[idx] = vlo
        self.hi[idx] = vhi

    def copy(self):
        return Interval(self.lo.copy(), self.hi.copy())

    def reshape(self, *shape):
        return Interval(self.lo.reshape(*shape), self.hi.reshape(*shape))

    @property
    def mid(self):
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def width(self):
        return sub_up(self.hi, self.lo)

    def mag(self):
        """Largest absolute value (as floats)."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def mig(self):
        """Smallest absolute value (as floats)."""
        m = np.minimum(np.abs(self.lo), np.abs(self.hi))
        return np.where((self.lo <= 0) & (self.hi >= 0), 0.0, m)

    def abs(self) -> "Interval":
        return Interval(self.mig(), self.mag())

    def contains(self, x) -> np.ndarray:
        xlo, xhi = _as_pair(x)
        return (self.lo <= xlo) & (xhi <= self.hi)

    def contains_zero(self) -> np.ndarray:
        return (self.lo <= 0) & (self.hi >= 0)

    def clip_nonneg(self) -> "Interval":
        """Intersect with [0, inf); used for majorants known to be >= 0."""
        return Interval(np.maximum(self.lo, 0.0), np.maximum(self.hi, 0.0))

    def is_point(self):
        return (self.lo == self.hi).all()

    # arithmetic
    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __pos__(self):
        return self

    def __add__(self, other):
        blo, bhi = _as_pair(other)
        return Interval(add_down(self.lo, blo), add_up(self.hi, bhi))

    __radd__ = __add__

    def __sub__(self, other):
        blo, bhi = _as_pair(other)
        return Interval(sub_down(self.lo, bhi), sub_up(self.hi, blo))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        blo, bhi = _as_pair(other)
        alo, ahi = self.lo, self.hi
        if isinstance(other, Interval):
            return Interval(_k.imul_lo(alo, ahi, blo, bhi), _k.imul_hi(alo, ahi, blo, bhi))
        b = blo
        pos = b >= 0
        lo = np.where(pos, mul_down(alo, b), mul_down(ahi, b))
        hi = np.where(pos, mul_up(ahi, b), mul_up(alo, b))
        return Interval(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        blo, bhi = _as_pair(other)
        if ((blo <= 0) & (bhi >= 0)).any():
            raise DomainError("division by an interval containing 0")
        return self * _reciprocal(blo, bhi)

    def __rtruediv__(self, other):
        return Interval(*_as_pair(other)) / self

    def sqr(self) -> "Interval":
        a = self.abs()
        return Interval(np.maximum(mul_down(a.lo, a.lo), 0.0), mul_up(a.hi, a.hi))

    def __pow__(self, n):
        if isinstance(n, (int, np.integer)):
            return pow_int(self, int(n))
        raise TypeError("only integer powers are supported; use exp/log")

    # certain comparisons
    def certainly_lt(self, other) -> np.ndarray:
        blo, _ = _as_pair(other)
        return self.hi < blo

    def certainly_gt(self, other) -> np.ndarray:
        _, bhi = _as_pair(other)
        return self.lo > bhi

    def subset(self, other: "Interval") -> np.ndarray:
        return (other.lo <= self.lo) & (self.hi <= other.hi)

    def __repr__(self):
        if self.ndim == 0:
            return f"Interval({float(self.lo)!r}, {float(self.hi)!r})"
        return f"Interval(shape={self.shape})"

    # serialisation: repr(float) round-trips bit-exactly
    def to_text(self) -> str:
        if self.ndim != 0:
            raise ValueError("to_text needs a scalar interval")
        return f"{float(self.lo)!r} {float(self.hi)!r}"

    @classmethod
    def from_text(cls, text: str) -> "Interval":
        """Inverse of :meth:`to_text`.  Endpoints denote binary64 numbers
        (nearest-rounded parse), so written files round-trip bit-exactly."""
        parts = text.split()
        if len(parts) != 2:
            raise ValueError(f"expected 'lo hi', got {text!r}")
        try:
            lo, hi = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ValueError(f"malformed endpoint in {text!r}") from exc
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"not a finite interval: {text!r}")
        return cls(lo, hi)


def _reciprocal(blo, bhi):
    one = np.ones_like(blo)
    return Interval(div_down(one, bhi), div_up(one, blo))


def iv(lo, hi=None) -> Interval:
    return Interval(lo, hi)


def iv_from_decimal(text: str) -> Interval:
    """Tight enclosure of a decimal literal (at most one ulp wide)."""
    t = text.strip()
    try:
        q = Fraction(t)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"malformed decimal literal {text!r}") from exc
    if "/" in t:
        raise ValueError(f"malformed decimal literal {text!r}")
    return Interval.from_fraction(q)


def hull(a: Interval, b: Interval) -> Interval:
    return Interval(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi))


def imin(a: Interval, b) -> Interval:
    blo, bhi = _as_pair(b)
    return Interval(np.minimum(a.lo, blo), np.minimum(a.hi, bhi))


def imax(a: Interval, b) -> Interval:
    blo, bhi = _as_pair(b)
    return Interval(np.maximum(a.lo, blo), np.maximum(a.hi, bhi))


def _sum_bound(x, axis, up):
    # |fl(sum) - sum| <= gamma_{n-1} * sum|x| ; plus possible underflow slack
    n = x.shape[axis] if axis is not None else x.size
    if n == 0:
        shape = np.sum(x, axis=axis).shape
        return np.zeros(shape)
    s = np.sum(x, axis=axis)
    if n == 1:
        return s
    g = (n * _U) / (1.0 - n * _U) * (1.0 + 4 * _U)
    err = np.sum(np.abs(x), axis=axis) * g * (1 + 2 * n * _U) + n * _ETA
    return _up(s + err) if up else _down(s - err)


def isum(a: Interval, axis=None) -> Interval:
    """Rigorous sum of an interval array along ``axis``."""
    lo = _sum_bound(a.lo, axis, False)
    hi = _sum_bound(a.hi, axis, True)
    # exact when every term is zero
    zlo = np.all(a.lo == 0, axis=axis)
    zhi = np.all(a.hi == 0, axis=axis)
    return Interval(np.where(zlo, 0.0, lo), np.where(zhi, 0.0, hi))


def pow_int(a: Interval, n: int) -> Interval:
    if n < 0:
        return 1.0 / pow_int(a, -n)
    if n == 0:
        return Interval(np.ones(a.shape))
    if n % 2 == 0:
        base = a.abs()
        return _pow_nonneg(base, n)
    neg = a.lo < 0
    # odd power is monotone: treat endpoints separately
    plo = _pow_endpoint(np.abs(a.lo), n)
    phi = _pow_endpoint(np.abs(a.hi), n)
    lo = np.where(neg, -plo.hi, plo.lo)
    hi = np.where(a.hi < 0, -phi.lo, phi.hi)
    return Interval(lo, hi)


def _pow_endpoint(x, n):
    return _pow_nonneg(Interval(x, x), n)


def _pow_nonneg(base: Interval, n: int) -> Interval:
    lo_r, hi_r = np.ones(base.shape), np.ones(base.shape)
    blo, bhi = base.lo, base.hi
    while n:
        if n & 1:
            lo_r, hi_r = mul_down(lo_r, blo), mul_up(hi_r, bhi)
        n >>= 1
        if n:
            blo, bhi = mul_down(blo, blo), mul_up(bhi, bhi)
    return Interval(lo_r, hi_r)


def sqrt(a: Interval) -> Interval:
    if (a.lo < 0).any():
        raise DomainError("sqrt of negative interval")
    return Interval(sqrt_down(a.lo), sqrt_up(a.hi))


# --- exp / log ---------------------------------------------------------------

_EXP_TERMS = 17
_EXP_COEF = None


# ln 2 lies strictly between these two 38-digit decimals
_LN2_BOUNDS = (Fraction("0.69314718055994530941723212145817656807"),
               Fraction("0.69314718055994530941723212145817656808"))
# 42-bit leading part: k * _LN2_HI is exact for |k| < 2^11
_LN2_HI = math.floor(math.log(2.0) * 2.0 ** 42) / 2.0 ** 42


def _ln2_enclosure(minus=0.0) -> Interval:
    lo = Interval.from_fraction(_LN2_BOUNDS[0] - Fraction(minus))
    hi = Interval.from_fraction(_LN2_BOUNDS[1] - Fraction(minus))
    return Interval(lo.lo, hi.hi)


_LN2_LO = None


def _exp_point(x) -> Interval:
    """Enclosure of exp(x) for a float array x.

    x = k ln2 + r with |r| <= 0.35; exp(r) from a Taylor series with a
    Lagrange remainder, then scaled by 2^k exactly.
    """
    global _LN2_LO, _EXP_COEF
    if _LN2_LO is None:
        _LN2_LO = _ln2_enclosure(_LN2_HI)
        _EXP_COEF = [Interval.from_fraction(Fraction(1, math.factorial(j)))
                     for j in range(_EXP_TERMS + 1)]
    x = np.asarray(x, dtype=float)
    if (x > 709.0).any():
        raise IntervalOverflow("exp overflow")
    # exp(x) < 2^-1075 below -745.2: the enclosure is [0, smallest subnormal]
    tiny = x < -746.0
    x = np.where(tiny, 0.0, x)
    k = np.rint(x / math.log(2.0))
    y = Interval(x) - k * _LN2_HI - _LN2_LO * k
    # Horner form of sum_{j<=N} y^j/j!; |R| <= 2|y|^(N+1)/(N+1)! for |y| < 1/2
    s = _EXP_COEF[_EXP_TERMS]
    for j in range(_EXP_TERMS - 1, -1, -1):
        s = s * y + _EXP_COEF[j]
    rem = pow_int(y.abs(), _EXP_TERMS + 1) * 2.0 * _EXP_COEF[_EXP_TERMS] / float(_EXP_TERMS + 1)
    s = s + Interval(-rem.hi, rem.hi)
    k1 = np.floor(k / 2.0)
    s = s * np.ldexp(1.0, k1.astype(int)) * np.ldexp(1.0, (k - k1).astype(int))
    return Interval(np.where(tiny, 0.0, np.maximum(s.lo, 0.0)), np.where(tiny, _ETA, s.hi))


def exp(a: Interval) -> Interval:
    if not isinstance(a, Interval):
        a = Interval(a)
    if a.is_point():
        return _exp_point(a.lo)
    n = np.size(a.lo)
    E = _exp_point(np.concatenate([np.ravel(a.lo), np.ravel(a.hi)]))
    return Interval(E.lo[:n].reshape(np.shape(a.lo)), E.hi[n:].reshape(np.shape(a.hi)))


def _refine_down(f_hi, x, target, step0):
    """Largest-ish y <= x with f(y).hi <= target by geometric back-off."""
    y = x.copy()
    step = np.full(x.shape, step0)
    for _ in range(200):
        bad = f_hi(y) > target
        if not bad.any():
            return y
        y = np.where(bad, y - step * np.maximum(np.abs(y), 1e-300), y)
        y = np.where(bad, _down(y), y)
        step = np.where(bad, step * 2.0, step)
    raise IntervalError("bound refinement did not converge")


def _refine_up(f_lo, x, target, step0):
    y = x.copy()
    step = np.full(x.shape, step0)
    for _ in range(200):
        bad = f_lo(y) < target
        if not bad.any():
            return y
        y = np.where(bad, y + step * np.maximum(np.abs(y), 1e-300), y)
        y = np.where(bad, _up(y), y)
        step = np.where(bad, step * 2.0, step)
    raise IntervalError("bound refinement did not converge")


def _log_reduced(x_lo, x_hi):
    """(lower, upper) bounds of log on [x_lo, x_hi] for moderate arguments:
    y = float log x, then log x = y + log(x e^-y) with
    t/(1+t) <= log(1+t) <= t bounding the small correction."""
    lo0 = np.log(x_lo)
    hi0 = np.log(x_hi)
    n = lo0.size
    E = _exp_point(np.concatenate([np.ravel(lo0), np.ravel(hi0)]))
    El = Interval(E.lo[:n], E.hi[:n]).reshape(lo0.shape)
    Eh = Interval(E.lo[n:], E.hi[n:]).reshape(hi0.shape)
    t1 = Interval(x_lo) / El - 1.0
    if (t1.lo <= -1.0).any():
        raise IntervalError("log enclosure failed")
    lo = (Interval(lo0) + (1.0 - 1.0 / (t1 + 1.0))).lo
    hi = (Interval(hi0) + (Interval(x_hi) / Eh - 1.0)).hi
    lo = np.where(x_lo == 1.0, 0.0, lo)
    hi = np.where(x_hi == 1.0, 0.0, hi)
    return lo, hi


def log(a: Interval) -> Interval:
    """Enclosure of log; arguments are split as m 2^e with m in [0.5, 1)
    so that tiny and huge values keep full relative accuracy."""
    if not isinstance(a, Interval):
        a = Interval(a)
    if (a.lo <= 0).any():
        raise DomainError("log of non-positive interval")
    if (~np.isfinite(a.hi)).any():
        raise IntervalOverflow("log of unbounded interval")
    ml, el = np.frexp(a.lo)
    mh, eh = np.frexp(a.hi)
    lo, hi = _log_reduced(ml, mh)
    L2 = _ln2_enclosure()
    lo = (Interval(lo) + L2 * el.astype(float)).lo
    hi = (Interval(hi) + L2 * eh.astype(float)).hi
    lo = np.where(a.lo == 1.0, 0.0, lo)
    hi = np.where(a.hi == 1.0, 0.0, hi)
    return Interval(lo, hi)


def root(a: Interval, n: int) -> Interval:
    """n-th root for positive intervals (n >= 1), verified with pow_int."""
    if not isinstance(a, Interval):
        a = Interval(a)
    if n < 1:
        raise DomainError("root order must be >= 1")
    if n == 1:
        return a
    if (a.lo <= 0).any():
        raise DomainError("root of non-positive interval")
    lo0 = a.lo ** (1.0 / n)
    hi0 = a.hi ** (1.0 / n)
    lo = _refine_down(lambda y: _pow_endpoint(y, n).hi, lo0, a.lo, 2 * _U)
    hi = _refine_up(lambda y: _pow_endpoint(y, n).lo, hi0, a.hi, 2 * _U)
    return Interval(lo, hi)


def pi() -> Interval:
    return Interval(float(_down(math.pi)), float(_up(math.pi)))


def golden() -> Interval:
    """Enclosure of (1 + sqrt 5)/2."""
    return (1.0 + sqrt(Interval(5.0))) / 2.0
