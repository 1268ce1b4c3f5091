"""The controlled field-line Hamiltonian and the initial Hamiltonian H^(0).

The equilibrium is ``H0(psi) = psi - 3/4 psi^2 + 1/3 psi^3 - 1/16 psi^4``, so
that ``H0'(psi) = 1/q(psi)`` with ``q(psi) = 4 / ((2 - psi)(2 - 2 psi + psi^2))``.
The perturbation is a pair of tearing modes
``v = eps (cos(2 theta - phi) + cos(3 theta - 2 phi))``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .interval import Interval, iv_from_decimal, golden
from .tfseries import (
    HamiltonianState,
    ResonanceError,
    TFSeries,
    tf_derivative,
    tf_gamma,
    tf_lie_transform,
    tf_mul,
    tf_poisson,
    tf_translate,
    tf_norm,
    strip_average,
    write_tfh,
)

log = logging.getLogger(__name__)

# H0 coefficients, psi^0 .. psi^4
H0_COEFFS = (Fraction(0), Fraction(1), Fraction(-3, 4), Fraction(1, 3), Fraction(-1, 16))
K_DEFAULT = 3
LMAX_DEFAULT = 4


def q_profile(psi):
    """Safety factor q(psi) (floats)."""
    psi = np.asarray(psi, dtype=float)
    return 4.0 / ((2.0 - psi) * (2.0 - 2.0 * psi + psi ** 2))


def h0_prime(psi):
    """H0'(psi) = 1/q(psi) (floats)."""
    psi = np.asarray(psi, dtype=float)
    return 1.0 - 1.5 * psi + psi ** 2 - 0.25 * psi ** 3


def taylor_coefficients(Psi: Interval):
    """[H0(Psi), H0'(Psi), H0''(Psi)/2, H0'''(Psi)/6, H0''''(Psi)/24]."""
    a = [Interval.from_fraction(c) for c in H0_COEFFS]
    out = []
    for l in range(5):
        # l-th derivative / l! = sum_j C(j, l) a_j Psi^(j-l)
        acc = Interval(0.0)
        for j in range(4, l - 1, -1):
            acc = acc * Psi + a[j] * float(_comb(j, l))
        out.append(acc)
    return out


def _comb(n, k):
    from math import comb
    return comb(n, k)


@dataclass
class ModelConfig:
    epsilon: Interval
    Psi: Interval
    omega_target: Interval
    K: int = K_DEFAULT
    l_max: int = LMAX_DEFAULT
    R_I: int = 12
    trunc: int | None = None

    def __post_init__(self):
        if (self.epsilon.lo < 0).any():
            raise ValueError("epsilon must be >= 0")
        if not ((self.Psi.lo > 0) & (self.Psi.hi < 1)).all():
            raise ValueError("Psi must lie in (0, 1)")
        if self.R_I < 1:
            raise ValueError("R_I must be >= 1")
        if self.trunc is None:
            self.trunc = 2 * self.K * self.R_I
        check_nonresonant(self.omega_target, self.K)

    @classmethod
    def from_strings(cls, eps="0.0005", Psi="0.35", omega=None, **kw):
        o = noble_interval(43, 74, 18, 31) if omega is None else (
            omega if isinstance(omega, Interval) else iv_from_decimal(omega))
        e = eps if isinstance(eps, Interval) else iv_from_decimal(eps)
        p = Psi if isinstance(Psi, Interval) else iv_from_decimal(Psi)
        return cls(e, p, o, **kw)


@dataclass
class NewtonConfig:
    dx: float = 1e-3
    Xi: float = 1e-8
    max_iters: int = 20


def check_nonresonant(omega: Interval, degree: int):
    for k1 in range(0, degree + 1):
        for k2 in range(-degree, degree + 1):
            if (k1, k2) == (0, 0) or (k1 == 0 and k2 < 0):
                continue
            d = omega * float(k1) + float(k2)
            if d.contains_zero():
                raise ResonanceError(k1, k2)


def noble_interval(n1, d1, n2, d2) -> Interval:
    """Enclosure of (n1 + sigma n2)/(d1 + sigma d2), sigma the golden ratio."""
    s = golden()
    return (s * float(n2) + float(n1)) / (s * float(d2) + float(d1))


def omega_D() -> Interval:
    return noble_interval(43, 74, 18, 31)


def build_equilibrium(Psi: Interval, l_max: int = LMAX_DEFAULT):
    """Returns (omega_tilde, h) where h holds the psi^2..psi^lmax averages."""
    a = taylor_coefficients(Psi)
    terms = {(l, 0, 0): (a[l], Interval(0.0)) for l in range(2, l_max + 1)}
    return a[1], TFSeries.from_terms(terms, D=0)


def build_perturbation(epsilon: Interval) -> TFSeries:
    return TFSeries.from_terms({(0, 2, -1): (epsilon, Interval(0.0)),
                                (0, 3, -2): (epsilon, Interval(0.0))})


def homological_generator(v: TFSeries, omega: Interval) -> TFSeries:
    """X with L_X(omega psi + P) = -v (non-average part of v)."""
    return tf_gamma(v, omega)


def build_control(omega_tilde: Interval, h2: TFSeries, v: TFSeries) -> TFSeries:
    """f = -(1/2) h2'' (dX/dtheta)^2 with the constant part dropped."""
    X = homological_generator(v, omega_tilde)
    dX = tf_derivative(X, "theta")
    d2h2 = h2.coef(2, 0, 0)[0] * 2.0
    f = tf_mul(dX, dX).scale(d2h2 * -0.5)
    return strip_average(f).compact() if not f.is_zero() else TFSeries.zeros(0)


def _target_lie(rest: TFSeries, chi: TFSeries, Dt: TFSeries, trunc, rtol, max_terms):
    """exp(L_chi)(omega psi + P + rest + Dt) - (omega psi + P), where chi
    solves the homological equation for Dt; Dt itself cancels and is
    replaced by sum_j j/(j+1)! L^j Dt."""
    out, _ = tf_lie_transform(rest, chi, trunc, max_terms=max_terms, rtol=rtol)
    term = Dt
    ref = float(tf_norm(rest).hi) + float(tf_norm(Dt).hi)
    for j in range(1, max_terms + 1):
        term = tf_poisson(chi, term)
        term, _ = _cut(term, trunc)
        term = term.scale(1.0 / j)
        if term.is_zero():
            break
        out = out + term.scale(float(j) / float(j + 1))
        if float(tf_norm(term).hi) <= rtol * max(ref, 1e-300):
            break
    return out


def _cut(t, trunc):
    from .tfseries import tf_truncate
    return tf_truncate(t, trunc)


def low_linear_part(g: TFSeries, K: int) -> TFSeries:
    """psi^1 harmonics with 0 < max(|k1|,|k2|) <= K."""
    p = g.plane(1).reshaped(K, 1, 1) if g.lmax >= 1 else TFSeries.zeros(K, 1, 1)
    return strip_average(p)


class ControlledHamiltonian:
    """H~ + f and the three transformations leading to H_c."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.omega_tilde, self.h = build_equilibrium(cfg.Psi, cfg.l_max)
        self.h2 = self.h.plane(2)
        self.v = build_perturbation(cfg.epsilon)
        self.X = homological_generator(self.v, self.omega_tilde)
        self.f = build_control(self.omega_tilde, self.h2, self.v)
        # exp(L_X) acting on H~ + f: the v terms cancel exactly
        hx, _ = tf_lie_transform(self.h, self.X, cfg.trunc)
        self.after_X = (hx + self.f) if not self.f.is_zero() else hx

    def d2_average(self) -> Interval:
        return self.h2.coef(2, 0, 0)[0] * 2.0

    def transform(self, xi: Interval, rtol=1e-60, max_terms=100):
        """Returns (rest, B) where H_c = omega_D psi + P + rest and
        B = <dH_c/dpsi> at psi = 0."""
        cfg = self.cfg
        shifted = tf_translate(self.after_X, xi)
        # omega~ psi = omega_D psi + (omega~ - omega_D) psi
        lin = TFSeries.from_terms({(1, 0, 0): (self.omega_tilde - cfg.omega_target, Interval(0.0))})
        rest = shifted + lin
        Dt = low_linear_part(rest, cfg.K)
        # remove the target exactly; it reappears through the target terms
        if rest.D < Dt.D:
            rest = rest.reshaped(Dt.D)
        mask = Dt.nonzero_mask()[0]
        Dk = Dt.D
        sl = (slice(rest.D - Dk, rest.D + Dk + 1),) * 2
        plane = 1 - rest.l0
        for arr in (rest.c, rest.s):
            sub_lo = arr.lo[(plane,) + sl]
            sub_hi = arr.hi[(plane,) + sl]
            sub_lo[mask] = 0.0
            sub_hi[mask] = 0.0
        if Dt.is_zero():
            out = rest
        else:
            chi = tf_gamma(Dt, cfg.omega_target)
            out = _target_lie(rest, chi, Dt, cfg.trunc, rtol, max_terms)
        B = cfg.omega_target + out.coef(1, 0, 0)[0]
        return out, B


def newton_xi_init(ch: ControlledHamiltonian, ncfg: NewtonConfig = NewtonConfig()):
    """Float Newton iteration for xi_init with a finite-difference slope.

    Returns (xi_init as a point Interval, number of iterations, history).
    """
    target = float(ch.cfg.omega_target.mid)
    om = float(ch.omega_tilde.mid)
    d2 = float(ch.d2_average().mid)
    if d2 == 0:
        raise ZeroDivisionError("zero slope: h2 average vanishes")
    xi = (target - om) / d2

    def B(x):
        return float(ch.transform(Interval(x), rtol=1e-30, max_terms=40)[1].mid)

    hist = []
    for it in range(1, ncfg.max_iters + 1):
        b0 = B(xi)
        step = ncfg.dx * abs(xi) if xi != 0 else ncfg.dx
        slope = (B(xi + step) - b0) / step
        if slope == 0 or not np.isfinite(slope):
            raise ZeroDivisionError("zero finite-difference slope in xi Newton")
        dxi = (target - b0) / slope
        xi = xi + dxi
        hist.append((xi, b0, dxi))
        log.info("xi newton %d: xi=%.17g B=%.17g dxi=%.3g", it, xi, b0, dxi)
        if abs(dxi) < ncfg.Xi:
            return Interval(xi), it, hist
    raise RuntimeError(f"xi Newton did not converge in {ncfg.max_iters} iterations")


def build_H0(cfg: ModelConfig, ncfg: NewtonConfig = NewtonConfig(), tfh_path=None,
             freq_path=None, xi=None):
    """Initial Hamiltonian H^(0) grouped into order blocks.

    Returns (state, info) where info holds xi_init, the Newton history and B.
    """
    ch = ControlledHamiltonian(cfg)
    hist = []
    its = 0
    if xi is None:
        xi, its, hist = newton_xi_init(ch, ncfg)
    rest, B = ch.transform(xi)
    state = HamiltonianState.from_series(cfg.omega_target, rest, cfg.l_max, cfg.K, cfg.R_I)
    info = {"xi_init": xi, "iterations": its, "history": hist, "B": B,
            "omega_tilde": ch.omega_tilde, "control": ch.f, "series": rest}
    if tfh_path is not None:
        write_tfh(tfh_path, state.total(), cfg.l_max, cfg.K, cfg.R_I)
    if freq_path is not None:
        from .formats import write_freq
        write_freq(freq_path, cfg.omega_target)
    return state, info
