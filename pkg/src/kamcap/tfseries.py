"""Taylor-Fourier polynomials with interval coefficients.

A series is ``sum_l psi^l sum_k [c_{l,k} cos(k.x) + s_{l,k} sin(k.x)]`` with
``x = (theta, phi)`` and ``k = (k1, k2)`` on the half lattice ``k1 > 0`` or
``k1 == 0, k2 >= 0``.  Coefficients are kept in dense arrays of shape
``(nl, 2D+1, 2D+1)``; entry ``[i, D+k1, D+k2]`` belongs to ``psi^(l0+i)``.
Entries outside the half lattice are always exactly zero.

Products go through the complex exponential form and use midpoint-radius
convolution with an a-priori rounding error bound, which keeps them both
rigorous and fast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import sparse_cmul
from .interval import Interval, isum, sqrt, add_up, sub_down, sub_up, _up

__all__ = [
    "TFSeries",
    "ResonanceError",
    "HamiltonianState",
    "tf_add_scaled",
    "tf_derivative",
    "tf_mul",
    "tf_poisson",
    "tf_gamma",
    "tf_norm",
    "tf_average",
    "tf_truncate",
    "tf_lie_transform",
    "tf_translate",
    "order_of",
    "read_tfh",
    "write_tfh",
]

_U = 2.0 ** -53
_ETA = 2.0 ** -1074


class ResonanceError(ArithmeticError):
    """A small divisor k1*omega + k2 could not be separated from zero."""

    def __init__(self, k1, k2, msg=None):
        self.k = (int(k1), int(k2))
        super().__init__(msg or f"resonant divisor at (k1, k2) = {self.k}")


def _half_mask(D):
    k = np.arange(-D, D + 1)
    k1 = k[:, None]
    k2 = k[None, :]
    return (k1 > 0) | ((k1 == 0) & (k2 >= 0))


def _kgrid(D):
    k = np.arange(-D, D + 1, dtype=float)
    return np.broadcast_to(k[:, None], (2 * D + 1, 2 * D + 1)), \
        np.broadcast_to(k[None, :], (2 * D + 1, 2 * D + 1))


def _iszero(x: Interval):
    return (x.lo == 0) & (x.hi == 0)


def canonical(k1, k2):
    """Map a harmonic to the half lattice; returns (k1, k2, sin_sign)."""
    if k1 > 0 or (k1 == 0 and k2 >= 0):
        return k1, k2, 1
    return -k1, -k2, -1


class TFSeries:
    """Dense Taylor-Fourier series; see module docstring for the layout."""

    __slots__ = ("c", "s", "l0")

    def __init__(self, c: Interval, s: Interval, l0: int = 0):
        if c.shape != s.shape or c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[1] % 2 != 1:
            raise ValueError(f"bad coefficient shape {c.shape}")
        self.c = c
        self.s = s
        self.l0 = int(l0)

    # --- construction ------------------------------------------------------
    @classmethod
    def zeros(cls, D=0, l0=0, nl=1):
        shape = (nl, 2 * D + 1, 2 * D + 1)
        return cls(Interval.zeros(shape), Interval.zeros(shape), l0)

    @classmethod
    def from_terms(cls, terms, D=None):
        """Build from ``{(l, k1, k2): (c, s)}``; c, s are Interval or float."""
        if not terms:
            return cls.zeros(0 if D is None else D)
        ls = [t[0] for t in terms]
        l0, l1 = min(ls), max(ls)
        if D is None:
            D = max(max(abs(t[1]), abs(t[2])) for t in terms)
        out = cls.zeros(D, l0, l1 - l0 + 1)
        for (l, k1, k2), (cv, sv) in terms.items():
            k1, k2, sg = canonical(k1, k2)
            if max(abs(k1), abs(k2)) > D:
                raise ValueError("term exceeds the requested degree")
            idx = (l - l0, k1 + D, k2 + D)
            cv = cv if isinstance(cv, Interval) else Interval(float(cv))
            sv = sv if isinstance(sv, Interval) else Interval(float(sv))
            if (k1, k2) == (0, 0):
                if not _iszero(sv):
                    raise ValueError("sin coefficient of (0,0) must be zero")
            out.c[idx] = out.c[idx] + cv
            out.s[idx] = out.s[idx] + (sv if sg > 0 else -sv)
        return out

    def copy(self):
        return TFSeries(self.c.copy(), self.s.copy(), self.l0)

    # --- shape information -------------------------------------------------
    @property
    def D(self):
        return (self.c.shape[1] - 1) // 2

    @property
    def nl(self):
        return self.c.shape[0]

    @property
    def lmax(self):
        return self.l0 + self.nl - 1

    def nonzero_mask(self):
        return ~(_iszero(self.c) & _iszero(self.s))

    def is_zero(self):
        return not self.nonzero_mask().any()

    def degree(self):
        """Largest max(|k1|, |k2|) among non-zero coefficients (0 if none)."""
        m = self.nonzero_mask().any(axis=0)
        if not m.any():
            return 0
        i, j = np.nonzero(m)
        return int(max(np.abs(i - self.D).max(), np.abs(j - self.D).max()))

    def l_range(self):
        """(lmin, lmax) of non-zero planes, or None for the zero series."""
        m = self.nonzero_mask().any(axis=(1, 2))
        if not m.any():
            return None
        idx = np.nonzero(m)[0]
        return self.l0 + int(idx[0]), self.l0 + int(idx[-1])

    def terms(self):
        """Yield ``(l, k1, k2, c, s)`` for every non-zero coefficient."""
        D = self.D
        for i, a, b in zip(*np.nonzero(self.nonzero_mask())):
            yield (self.l0 + int(i), int(a) - D, int(b) - D,
                   self.c[i, a, b], self.s[i, a, b])

    def coef(self, l, k1, k2):
        """(c, s) of the given term as Intervals (zero if absent)."""
        k1, k2, sg = canonical(k1, k2)
        D = self.D
        i = l - self.l0
        if i < 0 or i >= self.nl or max(abs(k1), abs(k2)) > D:
            return Interval(0.0), Interval(0.0)
        c = self.c[i, k1 + D, k2 + D]
        s = self.s[i, k1 + D, k2 + D]
        return c, (s if sg > 0 else -s)

    # --- reshaping -----------------------------------------------------------
    def reshaped(self, D=None, l0=None, nl=None):
        """Copy with another capacity; entries that do not fit must be zero."""
        D = self.D if D is None else D
        l0 = self.l0 if l0 is None else l0
        nl = (self.lmax - l0 + 1) if nl is None else nl
        out = TFSeries.zeros(D, l0, nl)
        d = min(D, self.D)
        src = (slice(self.D - d, self.D + d + 1),) * 2
        dst = (slice(D - d, D + d + 1),) * 2
        lo_l = max(l0, self.l0)
        hi_l = min(l0 + nl, self.l0 + self.nl)
        if hi_l > lo_l:
            si = slice(lo_l - self.l0, hi_l - self.l0)
            di = slice(lo_l - l0, hi_l - l0)
            for name in ("c", "s"):
                a = getattr(self, name)
                b = getattr(out, name)
                b.lo[(di,) + dst] = a.lo[(si,) + src]
                b.hi[(di,) + dst] = a.hi[(si,) + src]
        return out

    def plane(self, l):
        """The psi^l part as a single-plane series."""
        if l < self.l0 or l > self.lmax:
            return TFSeries.zeros(self.D, l, 1)
        i = l - self.l0
        return TFSeries(self.c[i:i + 1], self.s[i:i + 1], l)

    def compact(self):
        """Drop zero planes and shrink the capacity to the actual degree."""
        lr = self.l_range()
        if lr is None:
            return TFSeries.zeros(0, self.l0, 1)
        return self.reshaped(self.degree(), lr[0], lr[1] - lr[0] + 1)

    # --- arithmetic ----------------------------------------------------------
    def __add__(self, other):
        return tf_add_scaled(self, other, None)

    def __sub__(self, other):
        return tf_add_scaled(self, other, Interval(-1.0))

    def __neg__(self):
        return TFSeries(-self.c, -self.s, self.l0)

    def scale(self, a):
        return TFSeries(self.c * a, self.s * a, self.l0)

    def __mul__(self, other):
        if isinstance(other, TFSeries):
            return tf_mul(self, other)
        return self.scale(other)

    __rmul__ = __mul__

    def evaluate(self, psi, theta, phi):
        """Float evaluation of the midpoint series (for checks only)."""
        total = 0.0
        for l, k1, k2, c, s in self.terms():
            arg = k1 * theta + k2 * phi
            total = total + psi ** l * (float(c.mid) * np.cos(arg) + float(s.mid) * np.sin(arg))
        return total

    def __repr__(self):
        return f"TFSeries(l={self.l0}..{self.lmax}, D={self.D}, nnz={int(self.nonzero_mask().sum())})"


# --- basic operations -------------------------------------------------------------

def _align(a: TFSeries, b: TFSeries):
    D = max(a.D, b.D)
    l0 = min(a.l0, b.l0)
    l1 = max(a.lmax, b.lmax)
    nl = l1 - l0 + 1
    if (a.D, a.l0, a.nl) != (D, l0, nl):
        a = a.reshaped(D, l0, nl)
    if (b.D, b.l0, b.nl) != (D, l0, nl):
        b = b.reshaped(D, l0, nl)
    return a, b


def tf_add_scaled(a: TFSeries, b: TFSeries, c=None) -> TFSeries:
    """a + c*b coefficient-wise (c = None means 1)."""
    a, b = _align(a, b)
    if c is None:
        return TFSeries(a.c + b.c, a.s + b.s, a.l0)
    return TFSeries(a.c + b.c * c, a.s + b.s * c, a.l0)


def tf_derivative(g: TFSeries, var: str) -> TFSeries:
    """Exact term-wise derivative with respect to 'theta', 'phi' or 'psi'."""
    if var == "psi":
        if g.lmax == 0 or g.l_range() is None:
            return TFSeries.zeros(g.D, max(g.l0 - 1, 0), 1)
        if g.l0 == 0:
            c, s, l0 = g.c[1:], g.s[1:], 0
            base = 1
        else:
            c, s, l0 = g.c, g.s, g.l0 - 1
            base = g.l0
        f = np.arange(base, base + c.shape[0], dtype=float)[:, None, None]
        return TFSeries(c * f, s * f, l0)
    k1, k2 = _kgrid(g.D)
    k = {"theta": k1, "phi": k2}[var]
    k = np.broadcast_to(k, g.c.shape)
    # d/dx [c cos + s sin] = k s cos - k c sin
    return TFSeries(g.s * k, -(g.c * k), g.l0)


def tf_average(g: TFSeries, l=None) -> Interval:
    """Coefficient of the (0,0) harmonic (of psi^l, or of the lowest plane)."""
    l = g.l0 if l is None else l
    return g.coef(l, 0, 0)[0]


def strip_average(g: TFSeries) -> TFSeries:
    out = g.copy()
    D = g.D
    out.c.lo[:, D, D] = 0.0
    out.c.hi[:, D, D] = 0.0
    return out


def only_average(g: TFSeries) -> TFSeries:
    out = TFSeries.zeros(0, g.l0, g.nl)
    D = g.D
    out.c.lo[:, 0, 0] = g.c.lo[:, D, D]
    out.c.hi[:, 0, 0] = g.c.hi[:, D, D]
    return out


def _plane_norms(c: Interval, s: Interval) -> Interval:
    n = c.shape[1]
    D = (n - 1) // 2
    mod = sqrt(c.sqr() + s.sqr())
    l1 = c.abs() + s.abs()
    # keep whichever upper bound is smaller
    mod = Interval(mod.lo, np.minimum(mod.hi, np.maximum(l1.hi, mod.lo)))
    mod.lo[:, D, D] = c.abs().lo[:, D, D]
    mod.hi[:, D, D] = c.abs().hi[:, D, D]
    return isum(mod.reshape(c.shape[0], -1), axis=1)


def tf_norm(g: TFSeries, per_plane=False) -> Interval:
    """Sum of the moduli of the complex Fourier coefficients.

    Each pair (c, s) at k != 0 stands for two complex coefficients of modulus
    sqrt(c^2 + s^2)/2, so it contributes sqrt(c^2 + s^2).
    """
    norms = _plane_norms(g.c, g.s)
    if per_plane:
        return norms
    return isum(norms)


def tf_truncate(g: TFSeries, D: int):
    """Drop harmonics with max(|k1|,|k2|) > D; returns (series, tail norms per plane)."""
    if D >= g.D:
        return g, Interval.zeros((g.nl,))
    kept = g.reshaped(D)
    k = np.abs(np.arange(-g.D, g.D + 1))
    outer = np.broadcast_to((k[:, None] > D) | (k[None, :] > D), g.c.shape)
    rest_c = Interval(np.where(outer, g.c.lo, 0.0), np.where(outer, g.c.hi, 0.0))
    rest_s = Interval(np.where(outer, g.s.lo, 0.0), np.where(outer, g.s.hi, 0.0))
    return kept, _plane_norms(rest_c, rest_s)


# --- products ----------------------------------------------------------------

def _to_complex_midrad(g: TFSeries):
    """Full-lattice complex coefficients as (mid_re, mid_im, rad_re, rad_im)."""
    c, s = g.c, g.s
    cf = Interval(c.lo[:, ::-1, ::-1], c.hi[:, ::-1, ::-1])
    sf = Interval(s.lo[:, ::-1, ::-1], s.hi[:, ::-1, ::-1])
    zr = (c + cf) * 0.5
    zi = (sf - s) * 0.5
    D = g.D
    zr.lo[:, D, D] = c.lo[:, D, D]
    zr.hi[:, D, D] = c.hi[:, D, D]
    zi.lo[:, D, D] = 0.0
    zi.hi[:, D, D] = 0.0
    out = []
    for z in (zr, zi):
        m = z.mid
        r = np.maximum(sub_up(z.hi, m), sub_up(m, z.lo))
        out.append((m, r))
    return out[0][0], out[1][0], out[0][1], out[1][1]


def _sparse(mr, mi, rr, ri):
    nz = (mr != 0) | (mi != 0) | (rr != 0) | (ri != 0)
    l, i, j = np.nonzero(nz)
    return (l.astype(np.int64), i.astype(np.int64), j.astype(np.int64),
            mr[nz], mi[nz], np.abs(mr[nz]) + np.abs(mi[nz]), rr[nz] + ri[nz])


def tf_mul(a: TFSeries, b: TFSeries, trunc=None) -> TFSeries:
    """Rigorous product; degree is D_a + D_b unless truncated to ``trunc``."""
    if a.is_zero() or b.is_zero():
        D = a.D + b.D if trunc is None else min(trunc, a.D + b.D)
        return TFSeries.zeros(D, a.l0 + b.l0, a.nl + b.nl - 1)
    a = a.compact() if a.D > a.degree() else a
    b = b.compact() if b.D > b.degree() else b
    mar, mai, rar, rai = _to_complex_midrad(a)
    mbr, mbi, rbr, rbi = _to_complex_midrad(b)
    D = a.D + b.D
    A = _sparse(mar, mai, rar, rai)
    B = _sparse(mbr, mbi, rbr, rbi)
    re, im, rad, mm, hits = sparse_cmul(*A, *B, a.nl + b.nl - 1, 2 * D + 1)
    n = max(int(hits.max()), 1)
    # each midpoint is an n-term dot product of real and imaginary parts:
    # |error| <= gamma_{2n} * sum |a||b| plus underflow
    g = (2 * n + 2) * _U / (1.0 - (2 * n + 2) * _U)
    rad = rad + g * mm
    rad = _up(rad * (1.0 + 4 * (n + 4) * _U) + 8 * (n + 4) * _ETA)
    support = hits > 0
    rad = np.where(support, rad, 0.0)
    if not (np.isfinite(rad).all() and np.isfinite(re).all() and np.isfinite(im).all()):
        from .interval import IntervalOverflow
        raise IntervalOverflow("overflow in series product")
    # back to cos/sin on the half lattice: c = 2 Re W, s = -2 Im W, c0 = Re W
    lo_r, hi_r = sub_down(re, rad), add_up(re, rad)
    lo_i, hi_i = sub_down(im, rad), add_up(im, rad)
    mask = _half_mask(D)
    cl = np.where(mask, 2.0 * lo_r, 0.0)
    ch = np.where(mask, 2.0 * hi_r, 0.0)
    sl = np.where(mask, -2.0 * hi_i, 0.0)
    sh = np.where(mask, -2.0 * lo_i, 0.0)
    cl[:, D, D] = lo_r[:, D, D]
    ch[:, D, D] = hi_r[:, D, D]
    sl[:, D, D] = 0.0
    sh[:, D, D] = 0.0
    out = TFSeries(Interval(cl, ch), Interval(sl, sh), a.l0 + b.l0)
    if trunc is not None and trunc < D:
        out = out.reshaped(trunc)
    return out


def tf_poisson(F: TFSeries, G: TFSeries, trunc=None) -> TFSeries:
    """L_F G = dF/dtheta dG/dpsi - dG/dtheta dF/dpsi.

    The full bracket also has dF/dphi dG/dP - dG/dphi dF/dP, which vanishes
    for stored series; the linear part omega*psi + P goes through
    :func:`poisson_linear`.
    """
    terms = []
    dFpsi = tf_derivative(F, "psi")
    dGpsi = tf_derivative(G, "psi")
    if not dGpsi.is_zero() and F.l_range() is not None:
        terms.append(tf_mul(tf_derivative(F, "theta"), dGpsi, trunc))
    if not dFpsi.is_zero() and G.l_range() is not None:
        terms.append(-tf_mul(tf_derivative(G, "theta"), dFpsi, trunc))
    if not terms:
        D = F.D + G.D if trunc is None else min(trunc, F.D + G.D)
        return TFSeries.zeros(D, max(F.l0 + G.l0 - 1, 0), 1)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def poisson_linear(X: TFSeries, omega) -> TFSeries:
    """L_X (omega psi + P) = omega dX/dtheta + dX/dphi."""
    return tf_derivative(X, "theta").scale(omega) + tf_derivative(X, "phi")


def tf_gamma(g: TFSeries, omega: Interval, guard=None) -> TFSeries:
    """Solve (omega d/dtheta + d/dphi) X + g = 0 harmonic by harmonic.

    The (0,0) coefficients of g are ignored.  For c cos(k.x) + s sin(k.x)
    with d = k1*omega + k2 the solution is (s/d) cos(k.x) - (c/d) sin(k.x).
    """
    D = g.D
    k1, k2 = _kgrid(D)
    d = Interval(k1) * omega + k2
    used = g.nonzero_mask().any(axis=0)
    used[D, D] = False
    mig = d.mig()
    g_lo = 0.0 if guard is None else float(np.asarray(guard.lo if isinstance(guard, Interval) else guard))
    bad = used & ((mig <= 0) | (mig < g_lo))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise ResonanceError(i - D, j - D)
    dsafe = Interval(np.where(used, d.lo, 1.0), np.where(used, d.hi, 1.0))
    dsafe = Interval(np.broadcast_to(dsafe.lo, g.c.shape), np.broadcast_to(dsafe.hi, g.c.shape))
    c = g.s / dsafe
    s = -(g.c / dsafe)
    keep = np.broadcast_to(used, g.c.shape)
    c = Interval(np.where(keep, c.lo, 0.0), np.where(keep, c.hi, 0.0))
    s = Interval(np.where(keep, s.lo, 0.0), np.where(keep, s.hi, 0.0))
    return TFSeries(c, s, g.l0)


def homological_residual(X: TFSeries, g: TFSeries, omega) -> TFSeries:
    """(omega d/dtheta + d/dphi) X + g with the average of g removed."""
    return poisson_linear(X, omega) + strip_average(g)


# --- Lie transforms ------------------------------------------------------------

def tf_lie_transform(H: TFSeries, gen: TFSeries, trunc=None, omega=None,
                     max_terms=None, rtol=0.0):
    """exp(L_gen) H with every product truncated to degree ``trunc``.

    If ``omega`` is given the linear part omega*psi + P is included in H and
    its contribution L_gen(omega psi + P) is accumulated as well (the linear
    part itself is not returned).  For generators without psi the series
    terminates after at most lmax(H)+1 terms; otherwise it is summed until
    ``max_terms`` or until a term's norm is below ``rtol`` times the norm of H.

    Returns ``(series, tail)`` where tail holds the norms of dropped harmonics
    per psi-power (index l).
    """
    lr = gen.l_range()
    angle_only = lr is None or lr[1] == 0
    if max_terms is None:
        max_terms = 64
    lmax = max(H.lmax, 1)
    tail = Interval.zeros((lmax + 1,))

    def cut(t):
        nonlocal tail
        if trunc is None:
            return t
        t, tl = tf_truncate(t, trunc)
        tl_full = Interval.zeros((lmax + 1,))
        n = min(t.nl, lmax + 1 - t.l0)
        if n > 0:
            tl_full[t.l0:t.l0 + n] = tl[:n]
        tail = tail + tl_full
        return t

    out = H
    term = H
    if omega is not None:
        lin = cut(poisson_linear(gen, omega))
    else:
        lin = None
    href = float(tf_norm(H).hi) if rtol > 0 else 0.0
    for j in range(1, max_terms + 1):
        nxt = tf_poisson(gen, term)
        if lin is not None:
            nxt = nxt + lin
            lin = None
        term = cut(nxt.scale(1.0 / j) if j > 1 else nxt)
        if term.is_zero():
            break
        out = out + term
        if angle_only and j > lmax:
            break
        if rtol > 0 and float(tf_norm(term).hi) <= rtol * max(href, 1e-300):
            break
    return out, tail


def tf_translate(H: TFSeries, xi: Interval, omega=None) -> TFSeries:
    """exp(L_{xi theta}) H, i.e. the exact substitution psi -> psi + xi.

    The constant omega*xi produced by the linear part is dropped, as are the
    (0,0) constants of the psi^0 plane.
    """
    nl = H.lmax + 1
    h = H.reshaped(H.D, 0, nl)
    out = TFSeries.zeros(H.D, 0, nl)
    xi_pows = [Interval(1.0)]
    for j in range(1, nl):
        xi_pows.append(xi_pows[-1] * xi)
    for l in range(nl):
        for j in range(l + 1):
            coef = xi_pows[j] * float(math.comb(l, j))
            src = h.c[l], h.s[l]
            out.c[l - j] = out.c[l - j] + src[0] * coef
            out.s[l - j] = out.s[l - j] + src[1] * coef
    D = H.D
    out.c.lo[0, D, D] = 0.0
    out.c.hi[0, D, D] = 0.0
    return out


# --- Hamiltonian with grouped blocks -------------------------------------------

def order_of(l: int, k1: int, k2: int, K: int) -> int:
    """Order class s of a term: ceil(max|k|/K); averages are order 0 except
    psi^1 averages, which are order 1 (psi^0 averages are constants)."""
    d = max(abs(k1), abs(k2))
    if d == 0:
        return 1 if l == 1 else 0
    return -(-d // K)


@dataclass
class HamiltonianState:
    """omega*psi + P + sum over blocks (l, s) of psi^l-homogeneous series."""

    omega: Interval
    blocks: dict
    lmax: int = 4
    K: int = 3
    R_I: int = 1
    tail_norms: Interval = field(default=None)

    def __post_init__(self):
        if self.tail_norms is None:
            self.tail_norms = Interval.zeros((self.lmax + 1,))

    def block(self, l, s) -> TFSeries:
        b = self.blocks.get((l, s))
        if b is None:
            return TFSeries.zeros(s * self.K, l, 1)
        return b

    def set_block(self, l, s, g: TFSeries):
        if g.l_range() not in (None, (l, l)):
            raise ValueError("block must be homogeneous in psi")
        if g.degree() > s * self.K:
            raise ValueError(f"block ({l},{s}) exceeds degree {s * self.K}")
        g = g.reshaped(s * self.K, l, 1)
        self.blocks[(l, s)] = g

    def copy(self):
        return HamiltonianState(self.omega, {k: v.copy() for k, v in self.blocks.items()},
                                self.lmax, self.K, self.R_I, self.tail_norms.copy())

    def total(self) -> TFSeries:
        D = max([b.D for b in self.blocks.values()] + [0])
        out = TFSeries.zeros(D, 0, self.lmax + 1)
        for (l, s), b in sorted(self.blocks.items()):
            out = out + b.reshaped(D, 0, self.lmax + 1)
        return out

    @classmethod
    def from_series(cls, omega, H: TFSeries, lmax, K, R_I, S=None):
        """Group a series into order blocks; terms beyond order S are dropped
        (their norms go to tail_norms).  psi^0 averages are discarded."""
        S = R_I if S is None else S
        st = cls(omega, {}, lmax, K, R_I)
        terms = {}
        for l, k1, k2, c, s in H.terms():
            if l > lmax:
                raise ValueError("psi-degree above lmax")
            if l == 0 and (k1, k2) == (0, 0):
                continue
            o = order_of(l, k1, k2, K)
            if o > S:
                st.tail_norms[l] = st.tail_norms[l] + tf_norm(
                    TFSeries.from_terms({(l, k1, k2): (c, s)}))
                continue
            terms.setdefault((l, o), {})[(l, k1, k2)] = (c, s)
        for (l, o), tt in terms.items():
            st.blocks[(l, o)] = TFSeries.from_terms(tt, D=o * K)
        return st

    def block_norms(self, S=None) -> Interval:
        S = self.R_I if S is None else S
        out = Interval.zeros((self.lmax + 1, S + 1))
        for (l, s), b in self.blocks.items():
            if s <= S:
                out[l, s] = tf_norm(b)
        return out


# --- TFH text format --------------------------------------------------------------

def write_tfh(path, H: TFSeries, lmax: int, K: int, R_I: int):
    lines = ["TFH v1", f"{lmax} {K} {R_I}"]
    for l, k1, k2, c, s in H.terms():
        lines.append(f"{l} {k1} {k2} {c.to_text()} {s.to_text()}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_tfh(path):
    """Returns ``(series, lmax, K, R_I)``."""
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or rows[0] != "TFH v1":
        raise ValueError(f"{path}: not a TFH v1 file")
    try:
        lmax, K, R_I = (int(x) for x in rows[1].split())
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: bad header line") from exc
    terms = {}
    for n, row in enumerate(rows[2:], start=3):
        p = row.split()
        if len(p) != 7:
            raise ValueError(f"{path}:{n}: expected 7 fields")
        l, k1, k2 = int(p[0]), int(p[1]), int(p[2])
        c = Interval.from_text(p[3] + " " + p[4])
        s = Interval.from_text(p[5] + " " + p[6])
        if l < 0 or l > lmax:
            raise ValueError(f"{path}:{n}: psi-degree {l} outside 0..{lmax}")
        key = (l,) + canonical(k1, k2)[:2]
        if key in terms:
            raise ValueError(f"{path}:{n}: duplicate term")
        if canonical(k1, k2)[2] < 0:
            s = -s
        terms[key] = (c, s)
    return TFSeries.from_terms(terms), lmax, K, R_I
