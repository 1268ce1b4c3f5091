"""Bound propagation from R_I to R_II and the final KAM inequality.

Majorants are kept as interval arrays ``h[l, s]`` (only the upper endpoint
matters, lower endpoints are clipped at 0).  For steps r <= R_I the
generator constants come from the explicit normalization; for r > R_I they
are estimated from the majorants themselves.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .formats import Ledger
from .interval import (
    DomainError,
    Interval,
    IntervalError,
    IntervalOverflow,
    exp,
    imax,
    imin,
    isum,
    log,
    pi,
    pow_int,
    sqrt,
    sub_up,
)
from .tfseries import ResonanceError

log_ = logging.getLogger(__name__)

A_FLOOR = 1e-16   # used when every generator vanishes (e.g. eps = 0)


class ProofFailure(ArithmeticError):
    def __init__(self, hypothesis, detail=""):
        self.hypothesis = hypothesis
        super().__init__(f"{hypothesis}: {detail}" if detail else hypothesis)


# --- small divisors ------------------------------------------------------------------

def alpha_table(omega: Interval, rmax: int, K: int) -> Interval:
    """alpha_r for r = 0..rmax (entry 0 unused): min |k1 w + k2| over
    0 < max(|k1|,|k2|) <= rK."""
    N = rmax * K
    k1 = np.arange(1, N + 1, dtype=float)
    x = Interval(k1) * omega
    fl = np.floor(x.mid)
    best_lo = np.full(N, np.inf)
    best_hi = np.full(N, np.inf)
    for k2 in (-fl, -fl - 1.0):
        ok = np.abs(k2) <= np.maximum(k1, 1.0)
        d = (x + k2).abs()
        best_lo = np.where(ok, np.minimum(best_lo, d.lo), best_lo)
        best_hi = np.where(ok, np.minimum(best_hi, d.hi), best_hi)
    # k1 = 0 gives |k2| >= 1
    cum_lo = np.minimum.accumulate(np.minimum(best_lo, 1.0))
    cum_hi = np.minimum.accumulate(np.minimum(best_hi, 1.0))
    lo = np.concatenate([[1.0], cum_lo[K - 1::K]])
    hi = np.concatenate([[1.0], cum_hi[K - 1::K]])
    bad = np.nonzero(lo[1:] <= 0)[0]
    if bad.size:
        r = int(bad[0]) + 1
        idx = int(np.nonzero(best_lo[:r * K] <= 0)[0][0])
        kk1 = idx + 1
        kk2 = int(-np.round(kk1 * float(omega.mid)))
        raise ResonanceError(kk1, kk2, f"alpha_{r} not separated from 0 at {(kk1, kk2)}")
    return Interval(lo, hi)


def alpha_of(omega: Interval, r: int, K: int) -> Interval:
    return alpha_table(omega, r, K)[r]


# --- Diophantine constant -----------------------------------------------------------

def quadratic_cf(A: int, B: int, d: int, C: int, max_terms: int = 10_000):
    """Continued fraction of (A + B sqrt(d))/C, d > 0 not a square.

    Returns (prefix, period) of partial quotients.
    """
    if B == 0:
        raise ValueError("not a quadratic irrational")
    s = 1 if B > 0 else -1
    P, D, Q = A * s, d * B * B, C * s
    # make Q | D - P^2
    if (D - P * P) % Q:
        P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
    root = math.isqrt(D)
    seen = {}
    quots = []
    for n in range(max_terms):
        if (P, Q) in seen:
            i = seen[(P, Q)]
            return quots[:i], quots[i:]
        seen[(P, Q)] = n
        if Q > 0:
            a = (P + root) // Q
        else:
            a = -((P + root) // (-Q)) - 1
        quots.append(a)
        P = a * Q - P
        Q = (D - P * P) // Q
    raise ValueError("period not found")


def noble_cf(n1, d1, n2, d2):
    """Continued fraction (prefix, period) of (n1 + s n2)/(d1 + s d2),
    s = (1 + sqrt 5)/2."""
    # numerator (2 n1 + n2 + n2 sqrt5)/2, denominator (2 d1 + d2 + d2 sqrt5)/2
    a, b = 2 * n1 + n2, n2
    c, e = 2 * d1 + d2, d2
    # (a + b r)/(c + e r) = (a + b r)(c - e r)/(c^2 - 5 e^2)
    A = a * c - 5 * b * e
    B = b * c - a * e
    C = c * c - 5 * e * e
    return quadratic_cf(A, B, 5, C)


def convergents(quots):
    p0, q0, p1, q1 = 1, 0, quots[0], 1
    out = [(p1, q1)]
    for a in quots[1:]:
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        out.append((p1, q1))
    return out


def diophantine_gamma(omega: Interval, tau: int = 1, cf=None, scan=4000, norm="max"):
    """Rigorous gamma with |k1 w + k2| >= gamma/|k|^tau for all k != 0.

    ``cf`` is the (prefix, period) continued fraction of the exact frequency
    (a noble number is eventually periodic with period [1]).  Harmonics with
    |k1| below the horizon are scanned in interval arithmetic; above it the
    best-approximation property gives |k1| |k1 w + k2| >= 1/(A + 2), A the
    largest partial quotient of the period.

    With ``norm="max"`` the weight is max(|k1|,|k2|); since it never exceeds
    |k1| + |k2|, the result is also a valid constant for the l1 weight.
    """
    if tau != 1:
        raise ValueError("only tau = 1 is supported")
    if cf is None:
        raise ValueError("the continued fraction of omega is required")
    prefix, period = cf
    if not period:
        raise ValueError("omega must be irrational")
    quots = list(prefix) + list(period) * 3
    conv = convergents(quots + list(period))
    # consistency: every convergent the enclosure can resolve must lie on the
    # side of omega that the expansion says
    conv_chk = convergents(list(prefix) + list(period) * (64 // len(period) + 1))
    for n, (p, q) in enumerate(conv_chk):
        if n == 0 or q > 10 ** 6:
            continue
        side = Interval(float(q)) * omega - float(p)
        if side.contains_zero():
            break
        if (float(side.lo) > 0) != (n % 2 == 0):
            raise ValueError("continued fraction does not match omega")
    # partial quotients from index len(prefix) on are periodic
    n0 = len(prefix) + 1
    horizon = max(conv[n0][1], scan)
    k1 = np.arange(1, horizon + 1, dtype=float)
    x = Interval(k1) * omega
    fl = np.floor(x.mid)
    vals_lo = np.full(horizon, np.inf)
    vals_hi = np.full(horizon, np.inf)
    for k2 in (-fl, -fl - 1.0):
        d = (x + k2).abs()
        if norm == "max":
            wgt = np.maximum(k1, np.abs(k2))
        elif norm == "l1":
            wgt = k1 + np.abs(k2)
        else:
            raise ValueError(norm)
        v = d * wgt
        vals_lo = np.minimum(vals_lo, v.lo)
        vals_hi = np.minimum(vals_hi, v.hi)
    i = int(np.argmin(vals_lo))
    scan_min = Interval(vals_lo[i], vals_hi[i])
    tail = Interval(1.0) / float(max(period) + 2)
    gamma = Interval(min(float(scan_min.lo), float(tail.lo)), min(float(scan_min.hi), float(tail.hi)))
    # k1 = 0 gives weight*|k2| >= 1
    gamma = imin(gamma, Interval(1.0))
    k_arg = (i + 1, int(-fl[i]) if abs((x[i] - fl[i]).mid) < 0.5 else int(-fl[i] - 1))
    return gamma, {"argmin": k_arg, "horizon": horizon, "tail": tail}


# --- the propagation ------------------------------------------------------------

@dataclass
class Params:
    E: Interval
    zeta: Interval
    a: Interval
    floored: bool = False


@dataclass
class EstimateResult:
    R_I: int
    R_II: int
    K: int
    lmax: int
    h: Interval                      # majorants after step R_II, shape (lmax+1, R_II+1)
    params: Params
    m_RII: Interval
    delta_RII: Interval
    g: dict = field(default_factory=dict)          # r -> (g11, g12, g21, g22)
    hist_h: dict = field(default_factory=dict)     # r -> majorants (r <= R_I)
    hist_hat: dict = field(default_factory=dict)
    param_hist: list = field(default_factory=list)


def _zeros(L, N):
    return Interval.zeros((L, N + 1))


def _binom(n, k):
    return float(math.comb(n, k))


def _ratio_pow(y: Interval, a: Interval, r: int) -> Interval:
    """Upper bound of y / a^r computed through logarithms (a^r may underflow)."""
    if float(y.hi) == 0.0:
        return Interval(0.0)
    return exp(log(Interval(float(y.hi))) - log(Interval(float(a.lo))) * float(r))


def _root_factor(z: Interval, c: float, r: int) -> Interval:
    """(1 + c z)^(1/r)."""
    if float(z.hi) == 0.0:
        return Interval(1.0)
    return exp(log(z * c + 1.0) / float(r))


def _up_only(x: Interval) -> Interval:
    """Collapse to the upper endpoint: the recursions only need upper bounds
    of E, zeta and a, and this stops widths from compounding."""
    return Interval(float(x.hi))


# --- generator constants for r > R_I --------------------------------------------------

def estimate_gen_bounds(pre: Interval, avg: Interval, m: Interval, alpha_r: Interval,
                        r: int, K: int, delta: Interval = None):
    """(g11, g12, m^(r)) from the majorants of H^(r-1).

    ``avg`` holds majorants of the psi-linear averages by order, ``delta``
    bounds the change of h_2 at order r-1 during the previous step.
    """
    m_new = m - pre[2, r] * 2.0
    if delta is not None:
        m_new = m_new - delta * 2.0
    if float(m_new.lo) <= 0.0:
        raise ProofFailure("nondegeneracy m^(r) > 0",
                           f"m^({r}) lower bound {float(m_new.lo):.3e}")
    g11 = pre[0, r] * float(r * K) / alpha_r
    g12 = avg[r] / m_new
    return g11.clip_nonneg(), g12.clip_nonneg(), m_new


def estimate_chi2_bounds(hat: Interval, alpha_r: Interval, r: int, K: int):
    """(g21, g22) from the psi-linear majorant at order r after chi_1."""
    v = hat[1, r]
    return (v * float(r * K) / alpha_r).clip_nonneg(), (v / alpha_r).clip_nonneg()


# --- propagation rules ---------------------------------------------------------------

def propagate_chi1(pre: Interval, r: int, g1: Interval) -> Interval:
    """Majorants after exp(L_X) and the translation; g1 = g11 + g12.

    A psi^l block of order s feeds psi^(l-j) at order s + j r with weight
    C(l, j) g1^j; the angle block at order r is removed.
    """
    L, N1 = pre.shape
    N = N1 - 1
    hat = pre.copy()
    hat[0, r] = 0.0
    if float(g1.hi) == 0.0:
        return hat
    for l in range(1, L):
        p = Interval(1.0)
        for j in range(1, l + 1):
            if j * r > N:
                break
            p = p * g1
            n = N + 1 - j * r
            hat[l - j, j * r:] = hat[l - j, j * r:] + pre[l, :n] * (p * _binom(l, j))
    return hat


def propagate_chi2(hat: Interval, r: int, g21: Interval, g22: Interval, K: int) -> Interval:
    """Majorants after exp(L_chi2).

    (1/j!) L^j of a psi^l block of order s is bounded by the product of
    l g21 + (s + i r) K g22, i = 0..j-1 for s <= r and i = 1..j for s > r.
    The psi-linear block at order r is replaced by the saved target terms.
    """
    L, N1 = hat.shape
    N = N1 - 1
    new = hat.copy()
    new[1, r] = 0.0
    if float(g21.hi) == 0.0 and float(g22.hi) == 0.0:
        return new
    s_idx = np.arange(N + 1, dtype=float)
    shift = (s_idx > r).astype(float)
    for l in range(L):
        src = hat[l].copy()
        if l == 1:
            src[r] = 0.0
        if not (src.hi > 0).any():
            continue
        P = Interval(np.ones(N + 1))
        for j in range(1, N // r + 1):
            n = N + 1 - j * r
            factor = g21 * float(l) + g22 * ((s_idx + ((j - 1) + shift) * r) * float(K))
            P = P * factor / float(j)
            contrib = P[:n] * src[:n]
            if not (contrib.hi > 0).any():
                break
            new[l, j * r:] = new[l, j * r:] + contrib
    # target terms: (1/j!) prod_{i=1..j} [g21 + (i+1) r K g22] |target|
    D = hat[1, r]
    if float(D.hi) > 0:
        P = Interval(1.0)
        for j in range(1, N // r):
            t = (j + 1) * r
            P = P * (g21 + g22 * float((j + 1) * r * K)) / float(j)
            c = P * D
            if float(c.hi) == 0.0:
                break
            new[1, t] = new[1, t] + c
    return new


def propagate_step_bounds(pre: Interval, r: int, g, K: int):
    """Both stages of step r with generator constants g = (g11, g12, g21, g22).
    Returns (hat, new)."""
    g11, g12, g21, g22 = g
    hat = propagate_chi1(pre, r, g11 + g12)
    return hat, propagate_chi2(hat, r, g21, g22, K)


def refine_averages(avg: Interval, pre: Interval, new: Interval, r: int, g11: Interval):
    """Averages of psi-linear terms after step r (r > R_I).

    Up to order 2r-1 the only source of a new average is the translation of
    a quadratic average, so the old bound plus 2 g11 h_2 is kept when it is
    smaller than the generic majorant.
    """
    N = new.shape[1] - 1
    out = Interval(new.lo[1].copy(), new.hi[1].copy())
    lo_t, hi_t = r + 1, min(2 * r - 1, N)
    if hi_t >= lo_t:
        s = np.arange(lo_t - r, hi_t - r + 1)
        ref = avg[lo_t:hi_t + 1] + pre[2, s] * (g11 * 2.0)
        out[lo_t:hi_t + 1] = imin(ref, out[lo_t:hi_t + 1])
    return out


# --- (E, zeta, a) ---------------------------------------------------------------------

def init_params(hat: Interval, g21: Interval, g22: Interval, K: int, smax: int,
                g1_hist=()) -> Params:
    """Parameters of the tail inequality before the chi_2 update of step 1.

    a_1 = max(K g22, g21), zeta_1 = 1 and E_1 = max hat/(a_1^s zeta_1^l) over
    the orders s <= smax that the first step can populate.  If a_1 vanishes
    it is floored at the geometric rate max_r g1_r^(1/r) of the chi_1
    generators of the explicit steps (or A_FLOOR when those vanish too).
    """
    a1 = imax(g22 * float(K), g21)
    floored = False
    if float(a1.hi) <= 0.0:
        fl = A_FLOOR
        for r, g1 in enumerate(g1_hist, start=1):
            if float(g1.hi) > 0.0:
                fl = max(fl, float(exp(log(Interval(float(g1.hi))) / float(r)).hi))
        a1 = Interval(fl)
        floored = True
        log_.warning("all step-1 chi_2 generators vanish; a_1 floored at %g", fl)
    a1 = Interval(float(a1.hi))
    E = 0.0
    for s in range(min(smax, hat.shape[1] - 1) + 1):
        top = float(np.max(hat.hi[:, s]))
        if top <= 0.0:
            continue
        den = pow_int(a1, s)
        if float(den.lo) <= 0.0:
            raise ProofFailure("finite bound propagation", "a_1^s underflows")
        E = max(E, float((Interval(top) / den).hi))
    return Params(Interval(E), Interval(1.0), a1, floored)


def update_params(p: Params, g, r: int, R_I: int, lmax: int, K: int, stage="both") -> Params:
    """Two-stage update of (E, zeta, a) at step r.

    chi_1 stage (w = (g11+g12) zeta/a^r): r <= R_I gives E (1+w)^lmax,
    r > R_I gives a (1 + lmax w)^(1/r).  chi_2 stage (z = y/a^r with
    y = max(rK g22, g21)): r <= R_I gives zeta (1+z), a (1+z)^(1/r);
    r > R_I gives a (1 + (lmax+1) z)^(1/r).
    """
    g11, g12, g21, g22 = g
    if stage in ("both", "chi1"):
        w = _ratio_pow((g11 + g12) * p.zeta, p.a, r)
        if r <= R_I:
            p = Params(_up_only(p.E * pow_int(w + 1.0, lmax)), p.zeta, p.a, p.floored)
        else:
            p = Params(p.E, p.zeta, _up_only(p.a * _root_factor(w, float(lmax), r)), p.floored)
    if stage in ("both", "chi2"):
        y = imax(g22 * float(r * K), g21)
        z = _ratio_pow(y, p.a, r)
        if r <= R_I:
            p = Params(p.E, _up_only(p.zeta * (z + 1.0)),
                       _up_only(p.a * _root_factor(z, 1.0, r)), p.floored)
        else:
            p = Params(p.E, p.zeta, _up_only(p.a * _root_factor(z, float(lmax + 1), r)), p.floored)
    return p


class Propagator:
    """Runs the recursive estimates from the ledger of the explicit stage.

    mode = "mixed": explicit norms overwrite orders <= R_I for r <= R_I
    (the production mode); mode = "predict": nothing is overwritten, which
    is used to check that predictions dominate the explicit norms.
    """

    def __init__(self, ledger: Ledger, omega: Interval, R_II: int, mode="mixed",
                 keep_history=True):
        if R_II < ledger.R_I:
            raise ValueError("R_II must be >= R_I")
        if mode not in ("mixed", "predict"):
            raise ValueError(mode)
        self.led = ledger
        self.omega = omega
        self.R_I = ledger.R_I
        self.R_II = R_II
        self.K = ledger.K
        self.L = ledger.lmax + 1
        self.mode = mode
        self.keep_history = keep_history
        self.alpha = alpha_table(omega, R_II, self.K)

    def _explicit(self, store, r):
        out = _zeros(self.L, self.R_II)
        for l in range(self.L):
            for s in range(self.R_I + 1):
                v = store.get((r, l, s))
                if v is not None:
                    out[l, s] = v
        return out

    def _overwrite(self, arr, store, r):
        if self.mode == "mixed" and r <= self.R_I:
            ex = self._explicit(store, r)
            c = self.R_I + 1
            arr.lo[:, :c] = ex.lo[:, :c]
            arr.hi[:, :c] = ex.hi[:, :c]

    def run(self) -> EstimateResult:
        led, K, L, N, R_I = self.led, self.K, self.L, self.R_II, self.R_I
        lmax = L - 1
        h = self._explicit(led.h, 0)
        res = EstimateResult(R_I, N, K, lmax, None, None, None, None)
        params = None
        m = led.m if led.m is not None else Interval(0.0)
        avg = None
        delta = None
        for r in range(1, N + 1):
            pre = h
            if r <= R_I:
                g11, g12 = led.g[(r, 1, 1)], led.g[(r, 1, 2)]
            else:
                if r == R_I + 1:
                    avg = Interval(pre.lo[1].copy(), pre.hi[1].copy())
                g11, g12, m = estimate_gen_bounds(pre, avg, m, self.alpha[r], r, K, delta)
            hat = propagate_chi1(pre, r, g11 + g12)
            self._overwrite(hat, led.hat, r)
            if r <= R_I:
                g21, g22 = led.g[(r, 2, 1)], led.g[(r, 2, 2)]
            else:
                g21, g22 = estimate_chi2_bounds(hat, self.alpha[r], r, K)
            new = propagate_chi2(hat, r, g21, g22, K)
            self._overwrite(new, led.h, r)
            if r > R_I:
                avg = refine_averages(avg, pre, new, r, g11)
            # growth of the order-r quadratic block during this step
            delta = Interval(0.0, float(np.maximum(sub_up(new.hi[2, r], pre.hi[2, r]), 0.0)))
            g = (g11, g12, g21, g22)
            if r == 1:
                g1_hist = [led.g[(q, 1, 1)] + led.g[(q, 1, 2)] for q in range(1, R_I + 1)]
                params = init_params(hat, g21, g22, K, R_I + lmax, g1_hist)
                params = update_params(params, g, r, R_I, lmax, K, stage="chi2")
            else:
                params = update_params(params, g, r, R_I, lmax, K)
            res.param_hist.append((r, params.E, params.zeta, params.a))
            res.g[r] = g
            if self.keep_history and r <= R_I:
                res.hist_hat[r] = hat
                res.hist_h[r] = new
            h = new
        res.h = h
        res.params = params
        res.m_RII = m
        res.delta_RII = delta if delta is not None else Interval(0.0)
        return res


# --- theorem parameters ---------------------------------------------------------------

@dataclass
class ProofParams:
    rho: Interval
    sigma: Interval
    lam: Interval
    E: Interval
    gamma: Interval
    tau: int
    m: Interval
    lambda_star: Interval | None = None
    log10_lambda: float = float("nan")
    verdict: str = "NOT-PROVED"
    failing: str | None = None
    extra: dict = field(default_factory=dict)


def sigma_rule(K: int, R_II: int) -> Interval:
    return Interval(4.0) / float(K * R_II)


def geometric_tail(aw: Interval, N: int) -> Interval:
    """sum_{s > N} (a w)^s = (a w)^(N+1)/(1 - a w) for 0 < a w < 1."""
    if not (float(aw.lo) > 0.0 and float(aw.hi) < 1.0):
        raise DomainError("geometric tail needs 0 < a w < 1")
    return exp(log(aw) * float(N + 1)) / (1.0 - aw)


def proof_params(res: EstimateResult, gamma: Interval, tau: int = 1) -> ProofParams:
    K, N = res.K, res.R_II
    p = res.params
    sigma = sigma_rule(K, N)
    w = exp(sigma * float(2 * K))
    aw = p.a * w
    rho = Interval(1.0) / (p.zeta * 2.0)
    extra = {"a": p.a, "zeta": p.zeta, "E_RII": p.E, "a_exp2Ksigma": aw}
    if not float(aw.hi) < 1.0:
        pp = ProofParams(rho, sigma, Interval(0.0), Interval(0.0), gamma, tau, res.m_RII,
                         failing="convergence condition a*exp(2K sigma) < 1", extra=extra)
        return pp
    # geometric tail sum_{s > R_II} (a w)^s
    geom = geometric_tail(aw, N)
    ws = exp(Interval(np.arange(N + 1, dtype=float)) * (sigma * float(2 * K)))
    E = Interval(0.0)
    for l in range(2, res.lmax + 1):
        row = res.h[l].clip_nonneg()
        part = isum(row * ws) / pow_int(p.zeta, l) + p.E * geom
        E = imax(E, part)
    lam = p.E * geom / E
    # nondegeneracy with the tail of quadratic averages
    tail2 = p.E * pow_int(p.zeta, 2) * exp(log(p.a) * float(N + 1)) / (1.0 - p.a) * 2.0
    m = res.m_RII - res.delta_RII * 2.0 - tail2
    lg = (math.log10(float(p.E.hi)) - math.log10(float(E.lo))
          + (N + 1) * math.log10(float(aw.hi)) - math.log10(1.0 - float(aw.hi)))
    extra.update(geom=geom, tail_m=tail2)
    return ProofParams(rho, sigma, lam, E, gamma, tau, m, log10_lambda=lg, extra=extra)


def lambda_star(rho: Interval, sigma: Interval, E: Interval, gamma: Interval,
                m: Interval, tau: int = 1):
    """Threshold of the KAM theorem; returns (lambda_star, pieces)."""
    e = exp(Interval(1.0))
    e_pi = exp(pi().sqr() / 3.0)
    Ee = E * e_pi
    Abar = Ee / gamma * pow_int(Interval(float(tau)) / (e * sigma), tau)
    Bbar = (Abar / (e * rho * sigma) + 1.0) * Ee / (m * rho)
    Wbar = imax(pow_int(e, 2) / rho * (Abar / (e * sigma) + Bbar), Interval(2.0))
    Zbar = imax(Abar * e * 2.0 / (rho * sigma), Interval(2.0))
    # 20^-(25 + 9 tau) W^-2 Z^-2 and 9 (m rho^2/E e^(pi^2/3))^2, in logarithms
    l20 = log(Interval(20.0))
    log_first = -(l20 * float(25 + 9 * tau)) - log(Wbar) * 2.0 - log(Zbar) * 2.0
    log_second = log(m * rho.sqr() / Ee) * 2.0 + log(Interval(9.0))
    lam_star = exp(imin(log_first, log_second))
    ln10 = log(Interval(10.0))
    return lam_star, {"Abar": Abar, "Bbar": Bbar, "Wbar": Wbar, "Zbar": Zbar,
                      "log10_first": log_first / ln10, "log10_second": log_second / ln10}


def log10_interval(x: Interval):
    ln10 = math.log(10.0)
    lx = log(x)
    return float(lx.lo) / ln10, float(lx.hi) / ln10


def check_kam(pp: ProofParams) -> ProofParams:
    """Fill lambda_star and the verdict."""
    if pp.failing:
        pp.verdict = "NOT-PROVED"
        return pp
    if not float(pp.m.lo) > 0:
        pp.failing = "nondegeneracy m > 0"
        return pp
    if not float(pp.gamma.lo) > 0:
        pp.failing = "Diophantine gamma > 0"
        return pp
    if not (float(pp.rho.lo) > 0 and float(pp.E.lo) > 0):
        pp.failing = "positive rho and E"
        return pp
    ls, pieces = lambda_star(pp.rho, pp.sigma, pp.E, pp.gamma, pp.m, pp.tau)
    pp.lambda_star = ls
    pp.extra.update(pieces)
    if float(pp.lam.hi) < float(ls.lo):
        pp.verdict = "PROVED"
        pp.failing = None
    else:
        pp.verdict = "NOT-PROVED"
        pp.failing = "smallness lambda < lambda_star"
    return pp


def estimate(ledger: Ledger, omega: Interval, R_II: int, gamma: Interval, tau: int = 1):
    """Full second stage; returns (ProofParams, EstimateResult or None)."""
    try:
        res = Propagator(ledger, omega, R_II).run()
    except ProofFailure as exc:
        pp = ProofParams(Interval(0.0), sigma_rule(ledger.K, R_II), Interval(0.0), Interval(0.0),
                         gamma, tau, Interval(0.0), failing=exc.hypothesis,
                         extra={"detail": str(exc)})
        return pp, None
    except (IntervalOverflow, DomainError, IntervalError) as exc:
        pp = ProofParams(Interval(0.0), sigma_rule(ledger.K, R_II), Interval(0.0), Interval(0.0),
                         gamma, tau, Interval(0.0), failing="finite bound propagation",
                         extra={"detail": str(exc)})
        return pp, None
    try:
        pp = proof_params(res, gamma, tau)
        pp = check_kam(pp)
    except (IntervalOverflow, DomainError, IntervalError) as exc:
        pp = ProofParams(Interval(0.0), sigma_rule(ledger.K, R_II), Interval(0.0), Interval(0.0),
                         gamma, tau, Interval(0.0), failing="finite proof parameters",
                         extra={"detail": str(exc)})
    return pp, res


def domination_violations(ledger: Ledger, omega: Interval):
    """Compare predicted majorants (no overwriting) with explicit norms for
    r, s <= R_I.  Returns a list of (kind, r, l, s, predicted, explicit)."""
    R_I = ledger.R_I
    res = Propagator(ledger, omega, R_I, mode="predict").run()
    bad = []
    for r in range(1, R_I + 1):
        for kind, store, pred in (("hat", ledger.hat, res.hist_hat[r]), ("h", ledger.h, res.hist_h[r])):
            for l in range(ledger.lmax + 1):
                for s in range(R_I + 1):
                    ex = store.get((r, l, s))
                    if ex is None:
                        continue
                    if float(pred.hi[l, s]) < float(ex.hi):
                        bad.append((kind, r, l, s, float(pred.hi[l, s]), float(ex.hi)))
    return bad, res
