"""Frequency analysis of field-line orbits (plain floating point).

Orbits of ``H0(psi) + V(theta, phi)`` are integrated with a second order
symmetric splitting, one sample per perturbation period; the rotation
number is extracted from ``exp(i theta)`` with a Hann-windowed Fourier
maximization.  Nothing here feeds the proof.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit
from scipy.optimize import brentq, minimize_scalar
from scipy.signal.windows import hann

SIGMA = (1.0 + math.sqrt(5.0)) / 2.0

REGULAR = "regular"
PLATEAU = "plateau"
CHAOTIC = "chaotic-suspect"


@dataclass
class OrbitSample:
    psi0: float
    omega: float
    amplitude: float
    flag: str = REGULAR
    drift: float = 0.0


@dataclass(frozen=True)
class RationalPair:
    n1: int
    d1: int
    n2: int
    d2: int

    def __post_init__(self):
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError("denominators must be positive")
        if math.gcd(self.n1, self.d1) != 1 or math.gcd(self.n2, self.d2) != 1:
            raise ValueError("fractions must be reduced")

    @classmethod
    def parse(cls, a: str, b: str):
        fa, fb = Fraction(a), Fraction(b)
        return cls(fa.numerator, fa.denominator, fb.numerator, fb.denominator)


# --- the vector field ----------------------------------------------------------------

def perturbation_terms(eps: float, with_control: bool = True, Psi: float = 0.35):
    """Harmonics (k1, k2, c, s) of V = v (+ f) as float arrays."""
    terms = {(2, -1): [eps, 0.0], (3, -2): [eps, 0.0]}
    if with_control and eps != 0.0:
        from .interval import iv_from_decimal
        from .model import build_control, build_equilibrium, build_perturbation
        Pi = iv_from_decimal(repr(float(Psi)))
        om, h = build_equilibrium(Pi)
        f = build_control(om, h.plane(2), build_perturbation(iv_from_decimal(repr(float(eps)))))
        for l, k1, k2, c, s in f.terms():
            cur = terms.setdefault((k1, k2), [0.0, 0.0])
            cur[0] += float(c.mid)
            cur[1] += float(s.mid)
    keys = sorted(terms)
    k1 = np.array([k[0] for k in keys], dtype=np.int64)
    k2 = np.array([k[1] for k in keys], dtype=np.int64)
    c = np.array([terms[k][0] for k in keys])
    s = np.array([terms[k][1] for k in keys])
    return k1, k2, c, s


@njit(cache=True)
def _h0p(psi):
    return 1.0 - 1.5 * psi + psi * psi - 0.25 * psi * psi * psi


@njit(cache=True)
def _dtheta_v(theta, phi, k1, k2, c, s):
    g = 0.0
    for i in range(k1.size):
        a = k1[i] * theta + k2[i] * phi
        g += k1[i] * (s[i] * math.cos(a) - c[i] * math.sin(a))
    return g


@njit(cache=True)
def _grad_tab(theta, j, k1, k2, c, s, ephr, ephi, K1, K2, pr, pi_):
    # d/dtheta V via powers of exp(i theta) and a table of exp(i k2 phi_j)
    zr = math.cos(theta)
    zi = math.sin(theta)
    pr[0] = 1.0
    pi_[0] = 0.0
    for m in range(1, K1 + 1):
        pr[m] = pr[m - 1] * zr - pi_[m - 1] * zi
        pi_[m] = pr[m - 1] * zi + pi_[m - 1] * zr
    g = 0.0
    for i in range(k1.size):
        a1 = k1[i]
        if a1 >= 0:
            er, ei = pr[a1], pi_[a1]
        else:
            er, ei = pr[-a1], -pi_[-a1]
        br = ephr[j, k2[i] + K2]
        bi = ephi[j, k2[i] + K2]
        re = er * br - ei * bi
        im = er * bi + ei * br
        g += a1 * (s[i] * re - c[i] * im)
    return g


@njit(cache=True)
def _integrate(psi0, theta0, periods, substeps, k1, k2, c, s, ephr, ephi, K1, K2, out):
    tau = 2.0 * math.pi / substeps
    psi = psi0
    theta = theta0
    out[0] = theta
    pr = np.empty(K1 + 1)
    pi_ = np.empty(K1 + 1)
    g = _grad_tab(theta, 0, k1, k2, c, s, ephr, ephi, K1, K2, pr, pi_)
    for n in range(periods):
        for j in range(substeps):
            psi -= 0.5 * tau * g
            theta += tau * _h0p(psi)
            g = _grad_tab(theta, j + 1, k1, k2, c, s, ephr, ephi, K1, K2, pr, pi_)
            psi -= 0.5 * tau * g
        out[n + 1] = theta
        if not (0.0 <= psi <= 1.0):
            return n + 1, psi
    return periods, psi


def _phase_table(k2, substeps, phi0=0.0):
    K2 = int(np.max(np.abs(k2))) if k2.size else 0
    j = np.arange(substeps + 1)
    phi = phi0 + 2.0 * np.pi * j / substeps
    kk = np.arange(-K2, K2 + 1)
    ang = np.outer(phi, kk)
    return np.cos(ang), np.sin(ang), K2


def integrate_orbit(psi0, theta0=0.0, phi0=0.0, eps=0.0, with_control=True, periods=1024,
                    substeps=64, terms=None, Psi=0.35):
    """theta (unwrapped) sampled at phi = phi0 + 2 pi n, n = 0..periods.

    Returns (theta samples, final psi, escaped).  An orbit leaving
    0 <= psi <= 1 is stopped and reported as escaped.
    """
    if periods < 1 or substeps < 1:
        raise ValueError("periods and substeps must be >= 1")
    k1, k2, c, s = terms if terms is not None else perturbation_terms(eps, with_control, Psi)
    ephr, ephi, K2 = _phase_table(k2, substeps, phi0)
    K1 = int(np.max(np.abs(k1))) if k1.size else 0
    out = np.empty(periods + 1)
    n, psi = _integrate(float(psi0), float(theta0), int(periods), int(substeps),
                        k1, k2, c, s, ephr, ephi, K1, K2, out)
    return out[:n + 1], psi, n < periods


def step_map(psi, theta, phi, tau, terms):
    """One symmetric splitting step (kick/drift/kick), for checks."""
    k1, k2, c, s = terms
    psi = psi - 0.5 * tau * _dtheta_v(theta, phi, k1, k2, c, s)
    theta = theta + tau * _h0p(psi)
    phi = phi + tau
    psi = psi - 0.5 * tau * _dtheta_v(theta, phi, k1, k2, c, s)
    return psi, theta, phi


# --- frequency extraction ------------------------------------------------------------

def _amplitude(sig_w, n, wsum, nu):
    return abs(np.dot(sig_w, np.exp(-2j * np.pi * nu * n))) / wsum


def _slope(sig_w, n, nu):
    # d/dnu |S(nu)|^2 up to a positive factor
    e = sig_w * np.exp(-2j * np.pi * nu * n)
    return float(np.real(np.conj(e.sum()) * (-1j * np.dot(n, e))))


def naff_frequency(series, pad=4, xtol=1e-15, min_samples=256):
    """Dominant frequency (cycles per sample, in [0, 1)) and its amplitude.

    ``series`` is either complex samples or real angles theta_n, in which
    case exp(i theta_n) is analysed.  The FFT peak is refined by a root
    search on the derivative of the windowed amplitude.
    """
    x = np.asarray(series)
    if not np.iscomplexobj(x):
        x = np.exp(1j * x)
    N = x.size
    if N < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    w = hann(N, sym=True)
    wsum = w.sum()
    sig_w = x * w
    M = 1 << int(math.ceil(math.log2(pad * N)))
    spec = np.abs(np.fft.fft(sig_w, M))
    k = int(np.argmax(spec))
    nu0 = k / M
    n = np.arange(N, dtype=float)
    h = 1.0 / M
    a, b = nu0 - h, nu0 + h
    if _slope(sig_w, n, a) > 0 > _slope(sig_w, n, b):
        nu = brentq(lambda v: _slope(sig_w, n, v), a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)
    else:
        r = minimize_scalar(lambda v: -_amplitude(sig_w, n, wsum, v), bounds=(a, b),
                            method="bounded")
        nu = float(r.x)
    return float(nu) % 1.0, float(_amplitude(sig_w, n, wsum, nu))


def analyse_orbit(psi0, eps, with_control=True, periods=32769, substeps=64, terms=None,
                  amp_floor=0.2, drift_tol=1e-6, Psi=0.35) -> OrbitSample:
    th, psi, escaped = integrate_orbit(psi0, 0.0, 0.0, eps, with_control, periods, substeps,
                                       terms, Psi)
    if escaped or th.size < 512:
        return OrbitSample(float(psi0), float("nan"), 0.0, CHAOTIC, float("inf"))
    om, amp = naff_frequency(th)
    half = th.size // 2
    o1, _ = naff_frequency(th[:half])
    o2, _ = naff_frequency(th[half:])
    drift = abs(o1 - o2)
    flag = REGULAR
    if amp < amp_floor or drift > drift_tol:
        flag = CHAOTIC
    return OrbitSample(float(psi0), om, amp, flag, drift)


def build_fam(psi_from, psi_to, n, eps, with_control=True, periods=32769, substeps=64,
              Psi=0.35, progress=None):
    """One OrbitSample per point of an even grid; plateau members are
    re-flagged by :func:`detect_plateaus`."""
    terms = perturbation_terms(eps, with_control, Psi)
    grid = np.linspace(psi_from, psi_to, n)
    out = []
    for i, p in enumerate(grid):
        out.append(analyse_orbit(p, eps, with_control, periods, substeps, terms))
        if progress is not None:
            progress(i + 1, n)
    for q, (i, j) in _plateau_runs([o.omega for o in out], 1e-6):
        for o in out[i:j + 1]:
            if o.flag == REGULAR:
                o.flag = PLATEAU
    return out


# --- plateaus and rationals ----------------------------------------------------------

def simplest_rational(lo, hi) -> Fraction:
    """Fraction with the smallest denominator in [lo, hi] (0 <= lo <= hi)."""
    lo, hi = Fraction(lo), Fraction(hi)
    if lo > hi:
        raise ValueError("empty interval")
    fl = lo.numerator // lo.denominator
    if lo == fl:
        return Fraction(fl)
    if fl + 1 <= hi:
        return Fraction(fl + 1)
    return fl + 1 / simplest_rational(1 / (hi - fl), 1 / (lo - fl))


def _plateau_runs(omegas, tol, min_len=3):
    om = np.asarray(omegas, dtype=float)
    runs = []
    i = 0
    n = om.size
    while i < n:
        if not np.isfinite(om[i]):
            i += 1
            continue
        lo = hi = om[i]
        j = i
        while j + 1 < n and np.isfinite(om[j + 1]):
            lo2, hi2 = min(lo, om[j + 1]), max(hi, om[j + 1])
            if hi2 - lo2 > tol:
                break
            lo, hi = lo2, hi2
            j += 1
        if j - i + 1 >= min_len:
            mid = 0.5 * (lo + hi)
            runs.append((simplest_rational(mid - tol, mid + tol), (i, j)))
            i = j + 1
        else:
            i += 1
    return runs


def detect_plateaus(samples, tol=1e-6, min_len=3):
    """Maximal runs of >= min_len samples whose frequencies agree within
    tol, each labelled by the simplest rational within tol.

    Returns a list of (Fraction, (psi_first, psi_last)).
    """
    ps = [s.psi0 for s in samples]
    if any(b < a for a, b in zip(ps, ps[1:])):
        raise ValueError("samples must be sorted by psi0")
    return [(q, (ps[i], ps[j])) for q, (i, j) in _plateau_runs([s.omega for s in samples], tol, min_len)]


def regular_branch(samples, tol=1e-6, min_len=20):
    """Longest run of consecutive non-plateau samples with strictly
    monotone frequency; returns (length, (i, j)) and whether it reaches
    ``min_len``."""
    om = np.array([s.omega for s in samples], dtype=float)
    in_plateau = np.zeros(om.size, bool)
    for _, (i, j) in _plateau_runs(om, tol):
        in_plateau[i:j + 1] = True
    best = (0, (0, -1))
    for sign in (1.0, -1.0):
        i = 0
        while i < om.size:
            if in_plateau[i] or not np.isfinite(om[i]):
                i += 1
                continue
            j = i
            while (j + 1 < om.size and not in_plateau[j + 1] and np.isfinite(om[j + 1])
                   and sign * (om[j + 1] - om[j]) > 0):
                j += 1
            if j - i + 1 > best[0]:
                best = (j - i + 1, (i, j))
            i = j + 1
    return best, best[0] >= min_len


def noble_mediant(pair: RationalPair) -> float:
    """(n1 + s n2)/(d1 + s d2) with s the golden mean."""
    return (pair.n1 + SIGMA * pair.n2) / (pair.d1 + SIGMA * pair.d2)


# --- output ---------------------------------------------------------------------------

def write_csv(path, samples):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["psi0", "omega", "amplitude", "flag"])
        for s in samples:
            w.writerow([repr(float(s.psi0)), repr(float(s.omega)), repr(float(s.amplitude)), s.flag])


def read_csv(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(OrbitSample(float(row["psi0"]), float(row["omega"]),
                                   float(row["amplitude"]), row["flag"]))
    return out


def write_gnuplot(path, csv_path, title="frequency-action map", png=None):
    png = png or str(csv_path).rsplit(".", 1)[0] + ".png"
    with open(path, "w") as fh:
        fh.write("set datafile separator ','\n")
        fh.write("set terminal pngcairo size 900,600\n")
        fh.write(f"set output '{png}'\n")
        fh.write(f"set title '{title}'\n")
        fh.write("set xlabel 'psi_0'\nset ylabel 'omega'\nset key off\n")
        fh.write(f"plot '{csv_path}' every ::1 using 1:2 with points pt 7 ps 0.4\n")
