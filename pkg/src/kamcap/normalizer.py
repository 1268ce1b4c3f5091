"""Explicit Kolmogorov normalization steps in interval arithmetic.

Step r acts on blocks ``(l, s)`` (psi-degree l, order s) of the current
Hamiltonian and removes, in turn,

1. the angle-only block at order r, with a generator X solving the
   homological equation;
2. the average of the psi-linear block at order r, with a translation of
   the action by xi;
3. the remaining psi-linear block at order r, with a generator psi*c.

Only orders up to ``S`` (by default R_I) are computed; everything beyond is
the business of :mod:`kamcap.estimator`.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .formats import Ledger
from .interval import Interval
from .tfseries import (
    HamiltonianState,
    TFSeries,
    tf_average,
    tf_derivative,
    tf_gamma,
    tf_mul,
    tf_norm,
    tf_poisson,
    strip_average,
)

log = logging.getLogger(__name__)


class NondegeneracyError(ArithmeticError):
    """The twist C^(r) (or m) cannot be separated from zero."""


@dataclass
class StepArtifacts:
    r: int
    X: TFSeries
    xi: Interval
    C: Interval
    chi2: TFSeries
    g11: Interval
    g12: Interval
    g21: Interval
    g22: Interval
    target: TFSeries


def _zero_block(H, l, s):
    return TFSeries.zeros(s * H.K, l, 1)


def _add(blocks, key, g, K):
    l, s = key
    if g.degree() > s * K:
        raise AssertionError(f"term of degree {g.degree()} does not fit block {key}")
    g = g.reshaped(s * K, l, 1)
    if l == 0:
        g = strip_average(g)  # constants are dropped
    old = blocks.get(key)
    blocks[key] = g if old is None else old + g


def _rehome(g: TFSeries, l: int) -> TFSeries:
    """Same coefficients, declared as psi^l (used by the translation)."""
    return TFSeries(g.c, g.s, l)


def solve_translation(H: HamiltonianState, r: int):
    """(xi, C) with C = sum_{s<=r} d^2<h_2^(s)>/dpsi^2 and xi = -<f_1^(r)>/C."""
    C = Interval(0.0)
    for s in range(0, r + 1):
        b = H.blocks.get((2, s))
        if b is not None:
            C = C + tf_average(b, 2) * 2.0
    a = tf_average(H.block(1, r), 1)
    if (a.lo == 0) & (a.hi == 0):
        return Interval(0.0), C
    if C.contains_zero():
        raise NondegeneracyError(f"C^({r}) = [{float(C.lo)}, {float(C.hi)}] contains 0")
    return -(a / C), C


def _apply_chi1(H: HamiltonianState, X: TFSeries, r: int, S: int) -> dict:
    """exp(L_X) on every block; L_X g = dX/dtheta * dg/dpsi."""
    blocks = {k: v.copy() for k, v in H.blocks.items()}
    blocks[(0, r)] = _zero_block(H, 0, r)
    if X.is_zero():
        return blocks
    dX = tf_derivative(X, "theta")
    for (l, s), g in sorted(H.blocks.items()):
        if l == 0 or g.is_zero():
            continue
        term = g
        for j in range(1, l + 1):
            t = s + j * r
            if t > S:
                break
            term = tf_mul(dX, tf_derivative(term, "psi"))
            if j > 1:
                term = term.scale(1.0 / j)
            _add(blocks, (l - j, t), term, H.K)
    return blocks


def _apply_translation(blocks: dict, xi: Interval, r: int, S: int, K: int) -> dict:
    out = {k: v.copy() for k, v in blocks.items()}
    if (xi.lo == 0) & (xi.hi == 0):
        return out
    xi_pow = [Interval(1.0)]
    for _ in range(4):
        xi_pow.append(xi_pow[-1] * xi)
    for (l, s), g in sorted(blocks.items()):
        if g.is_zero():
            continue
        for j in range(1, l + 1):
            t = s + j * r
            if t > S:
                break
            c = xi_pow[j] * float(math.comb(l, j))
            contrib = _rehome(g.scale(c), l - j)
            if l == 2 and j == 1 and s <= r:
                # the xi-linear averages of h_2 with s <= r are moved to
                # order r, where they cancel <f_1^(r)> exactly
                contrib = strip_average(contrib)
            _add(out, (l - j, t), contrib, K)
    key = (1, r)
    if key in out:
        b = out[key]
        D = b.D
        b.c.lo[0, D, D] = 0.0
        b.c.hi[0, D, D] = 0.0
    return out


def _apply_chi2(blocks: dict, chi: TFSeries, target: TFSeries, r: int, S: int, K: int) -> dict:
    out = {k: v.copy() for k, v in blocks.items()}
    out[(1, r)] = TFSeries.zeros(r * K, 1, 1)
    if chi.is_zero():
        return out
    for (l, s), g in sorted(blocks.items()):
        if (l, s) == (1, r) or g.is_zero():
            continue
        term = g
        for j in range(1, S + 1):
            t = s + j * r
            if t > S:
                break
            term = tf_poisson(chi, term)
            if j > 1:
                term = term.scale(1.0 / j)
            _add(out, (l, t), term, K)
    # sum_{j>=1} j/(j+1)! L^j target, at orders r + j r
    term = target
    for j in range(1, S + 1):
        t = r + j * r
        if t > S:
            break
        term = tf_poisson(chi, term)
        if j > 1:
            term = term.scale(1.0 / j)
        _add(out, (1, t), term.scale(float(j) / float(j + 1)), K)
    return out


def kam_step(H: HamiltonianState, r: int, S: int | None = None):
    """One normalization step.  Returns (new state, artifacts, hat norms)."""
    S = H.R_I if S is None else S
    K = H.K
    omega = H.omega
    D0 = strip_average(H.block(0, r))
    X = tf_gamma(D0, omega)
    blocks = _apply_chi1(H, X, r, S)
    mid = HamiltonianState(omega, blocks, H.lmax, K, H.R_I, H.tail_norms.copy())
    xi, C = solve_translation(mid, r)
    blocks = _apply_translation(blocks, xi, r, S, K)
    hat = HamiltonianState(omega, blocks, H.lmax, K, H.R_I, H.tail_norms.copy())
    target = strip_average(hat.block(1, r))
    chi = tf_gamma(target, omega)
    blocks = _apply_chi2(blocks, chi, target, r, S, K)
    new = HamiltonianState(omega, blocks, H.lmax, K, H.R_I, H.tail_norms.copy())
    art = StepArtifacts(
        r=r, X=X, xi=xi, C=C, chi2=chi,
        g11=tf_norm(tf_derivative(X, "theta")),
        g12=xi.abs(),
        g21=tf_norm(tf_derivative(chi, "theta")),
        g22=tf_norm(tf_derivative(chi, "psi")),
        target=target,
    )
    return new, art, hat.block_norms(S)


def nondegeneracy_bound(H: HamiltonianState, S: int) -> Interval:
    """|sum_{s<=S} d^2<h_2^(s)>/dpsi^2| as an interval."""
    C = Interval(0.0)
    for s in range(0, S + 1):
        b = H.blocks.get((2, s))
        if b is not None:
            C = C + tf_average(b, 2) * 2.0
    return C.abs()


def normalize(H0: HamiltonianState, R_I: int | None = None, S: int | None = None,
              step_log=None):
    """Run steps r = 1..R_I.

    Returns (H^(R_I), list of StepArtifacts, Ledger).  ``step_log`` may be
    a writable text stream receiving one JSON record per step.
    """
    R_I = H0.R_I if R_I is None else R_I
    S = R_I if S is None else S
    led = Ledger(H0.lmax, H0.K, R_I)
    _record(led.h, 0, H0.block_norms(R_I))
    for l in range(H0.lmax + 1):
        led.tail[l] = H0.tail_norms[l]
    H = H0
    arts = []
    for r in range(1, R_I + 1):
        H, art, hat = kam_step(H, r, S)
        arts.append(art)
        for (i, j), v in zip(((1, 1), (1, 2), (2, 1), (2, 2)),
                             (art.g11, art.g12, art.g21, art.g22)):
            led.g[(r, i, j)] = v
        led.xi[r] = art.xi
        _record(led.hat, r, hat[:, :R_I + 1])
        _record(led.h, r, H.block_norms(R_I))
        rec = {"r": r, "g11": float(art.g11.hi), "g12": float(art.g12.hi),
               "g21": float(art.g21.hi), "g22": float(art.g22.hi),
               "xi": float(art.xi.mid), "C": float(art.C.mid)}
        log.info("step %s", rec)
        if step_log is not None:
            step_log.write(json.dumps(rec) + "\n")
    m = nondegeneracy_bound(H, R_I)
    if float(m.lo) <= 0.0:
        raise NondegeneracyError("m^(R_I) is not bounded away from 0")
    led.m = m
    return H, arts, led


def _record(store, r, norms: Interval):
    nl, ns = norms.shape
    for l in range(nl):
        for s in range(ns):
            store[(r, l, s)] = norms[l, s]
