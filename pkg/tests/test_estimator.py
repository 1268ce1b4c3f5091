import math
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
import pytest

from kamcap.estimator import (
    Params,
    ProofParams,
    Propagator,
    alpha_of,
    alpha_table,
    check_kam,
    convergents,
    diophantine_gamma,
    domination_violations,
    estimate,
    estimate_chi2_bounds,
    estimate_gen_bounds,
    geometric_tail,
    lambda_star,
    log10_interval,
    noble_cf,
    propagate_chi1,
    propagate_chi2,
    quadratic_cf,
    sigma_rule,
    update_params,
)
from kamcap.formats import Ledger
from kamcap.interval import Interval, iv_from_decimal
from kamcap.model import noble_interval, omega_D
from kamcap.tfseries import ResonanceError

from conftest import encloses

TABLE = dict(rho="0.024215", sigma="0.00015686", E="0.0061441", gamma="0.24999", m="1.3809")


def table():
    return {k: iv_from_decimal(v) for k, v in TABLE.items()}


def zeros(L=5, N=10):
    return Interval.zeros((L, N + 1))


# --- small divisors ---------------------------------------------------------------------

def brute_alpha(w, r, K):
    best = math.inf
    for k1 in range(-r * K, r * K + 1):
        for k2 in range(-r * K, r * K + 1):
            if (k1, k2) != (0, 0):
                d = abs(k1 * w + k2)
                if d < best:
                    best, arg = d, (k1, k2)
    return best, arg


def test_alpha_example():
    a = alpha_of(omega_D(), 1, 3)
    ref, arg = brute_alpha(float(omega_D().mid), 1, 3)
    assert encloses(a, ref) and abs(ref - 0.16181) < 1e-5
    assert arg in ((2, -1), (-2, 1))


def test_alpha_table_against_brute_force():
    tab = alpha_table(omega_D(), 8, 3)
    w = float(omega_D().mid)
    for r in range(1, 9):
        ref, _ = brute_alpha(w, r, 3)
        assert abs(float(tab[r].mid) - ref) < 1e-14
        if r > 1:
            assert float(tab[r].hi) <= float(tab[r - 1].hi)


def test_alpha_resonance():
    with pytest.raises(ResonanceError) as ei:
        alpha_of(Interval(0.5), 1, 3)
    assert ei.value.k == (2, -1)


# --- generator constants -----------------------------------------------------------------

def test_gen_bounds_zero_inputs():
    pre, avg = zeros(), Interval.zeros((11,))
    m = Interval(0.9)
    g11, g12, m2 = estimate_gen_bounds(pre, avg, m, Interval(0.1), 2, 3)
    assert float(g11.hi) == 0 and float(g12.hi) == 0
    assert float(m2.lo) == 0.9 and float(m2.hi) == 0.9
    g21, g22 = estimate_chi2_bounds(pre, Interval(0.1), 2, 3)
    assert float(g21.hi) == 0 and float(g22.hi) == 0


def test_gen_bounds_arithmetic():
    alpha = Interval(0.125)
    pre = zeros()
    pre[0, 2] = alpha
    g11, _, _ = estimate_gen_bounds(pre, Interval.zeros((11,)), Interval(1.0), alpha, 2, 3)
    assert float(g11.lo) == 6.0 and float(g11.hi) == 6.0


def test_m_decreases():
    pre = zeros()
    pre[2, 3] = Interval(0.01)
    _, _, m2 = estimate_gen_bounds(pre, Interval.zeros((11,)), Interval(0.9), Interval(0.1), 3, 3)
    assert float(m2.hi) <= 0.9 and encloses(m2, 0.88)


def test_m_exhausted_is_a_named_failure():
    from kamcap.estimator import ProofFailure
    pre = zeros()
    pre[2, 3] = Interval(1.0)
    with pytest.raises(ProofFailure) as ei:
        estimate_gen_bounds(pre, Interval.zeros((11,)), Interval(0.9), Interval(0.1), 3, 3)
    assert "nondegeneracy" in ei.value.hypothesis


# --- propagation ----------------------------------------------------------------------------

def test_chi1_single_term():
    pre = zeros()
    pre[2, 0] = Interval(1.0)
    hat = propagate_chi1(pre, 1, Interval(0.1))
    # l = 2, j = 1: C(2,1) * 0.1 * 1 lands on psi^1 at order 1
    assert encloses(hat[1, 1], 0.2)
    # j = 2: 0.1^2 on psi^0 at order 2
    assert encloses(hat[0, 2], 0.01)


def test_zero_generators_copy():
    rng = np.random.default_rng(0)
    pre = Interval(rng.uniform(0, 1, (5, 11)))
    pre[0, 3] = 0.0
    pre[1, 3] = 0.0
    hat = propagate_chi1(pre, 3, Interval(0.0))
    new = propagate_chi2(hat, 3, Interval(0.0), Interval(0.0), 3)
    assert (new.lo == pre.lo).all() and (new.hi == pre.hi).all()


def test_chi2_dominates_one_bracket():
    # a psi^1 block at order r times g21 feeds order 2r
    pre = zeros()
    pre[1, 2] = Interval(0.5)
    pre[2, 0] = Interval(1.0)
    new = propagate_chi2(pre, 2, Interval(0.1), Interval(0.01), 3)
    assert float(new[1, 2].hi) == 0.0            # removed
    # target terms: (g21 + 2 r K g22) * 0.5 at order 2r
    assert float(new[1, 4].lo) >= (0.1 + 12 * 0.01) * 0.5 - 1e-15
    # h_2 at order 0: (2 g21 + 0) at order 2
    assert float(new[2, 2].lo) >= 0.2 - 1e-15


def test_params_unchanged_for_zero_generators():
    p = Params(Interval(3.0), Interval(2.0), Interval(0.5))
    z = (Interval(0.0),) * 4
    for r in (1, 5, 20):
        q = update_params(p, z, r, 10, 4, 3)
        for a, b in ((p.E, q.E), (p.zeta, q.zeta), (p.a, q.a)):
            assert float(a.hi) == float(b.hi)


def test_params_monotone_outer_branch():
    p = Params(Interval(3.0), Interval(2.0), Interval(0.5))
    g = (Interval(1e-9), Interval(0.0), Interval(1e-8), Interval(1e-9))
    q = update_params(p, g, 30, 10, 4, 3)
    z = max(30 * 3 * 1e-9, 1e-8) / 0.5 ** 30
    assert float(q.a.hi) >= 0.5
    assert float(q.a.hi) >= 0.5 * (1 + 5 * z) ** (1 / 30) * (1 - 1e-12)


# --- Diophantine constant ------------------------------------------------------------------------

def test_quadratic_cf_sqrt2():
    pre, per = quadratic_cf(0, 1, 2, 1)
    assert pre == [1] and per == [2]


def test_noble_cf():
    pre, per = noble_cf(43, 74, 18, 31)
    assert per == [1]
    conv = convergents(pre + per * 30)
    p, q = conv[-1]
    assert abs(p / q - float(omega_D().mid)) < 1e-15
    assert (18, 31) in conv


def test_gamma_omega_D():
    g, info = diophantine_gamma(omega_D(), 1, cf=noble_cf(43, 74, 18, 31))
    assert abs(float(g.mid) - 0.24999) < 5e-4
    # defining property on the scanned lattice
    w = float(omega_D().hi)
    for k1 in range(1, 500):
        for k2 in (-math.floor(k1 * w), -math.floor(k1 * w) - 1):
            d = abs(k1 * w + k2)
            assert float(g.lo) <= max(k1, abs(k2)) * d * (1 + 1e-9)
            assert float(g.lo) <= (k1 + abs(k2)) * d * (1 + 1e-9)


def test_golden_convergents():
    w = noble_interval(0, 1, 1, 1)
    with localcontext() as ctx:
        ctx.prec = 50
        ref = 2 / (1 + Decimal(5).sqrt())
    assert encloses(w, ref)
    pre, per = noble_cf(0, 1, 1, 1)
    conv = convergents(pre + per * 25)
    for p, q in conv[8:]:
        x = q * abs(q * ref - p)
        assert abs(float(x) - 1 / math.sqrt(5)) < 0.01
    g, _ = diophantine_gamma(w, 1, cf=(pre, per))
    assert 0 < float(g.hi) <= 1 / math.sqrt(5) + 1e-9


def test_gamma_needs_matching_cf():
    with pytest.raises(ValueError):
        diophantine_gamma(omega_D(), 1, cf=noble_cf(0, 1, 1, 1))


# --- theorem parameters --------------------------------------------------------------------------

def test_sigma_rule():
    s = sigma_rule(3, 8500)
    assert abs(float(s.mid) - 0.00015686) < 5e-9
    assert encloses(s, Fraction(4, 25500))


def test_rho_to_zeta():
    rho = iv_from_decimal("0.024215")
    zeta = Interval(1.0) / (rho * 2.0)
    assert abs(float(zeta.mid) - 20.648) < 1e-3


def test_geometric_tail():
    t = geometric_tail(Interval(0.5), 1)
    assert encloses(t, 0.5) and float(t.hi - t.lo) < 1e-14


def test_lambda_star_table():
    t = table()
    ls, pieces = lambda_star(t["rho"], t["sigma"], t["E"], t["gamma"], t["m"], 1)
    lo, hi = log10_interval(ls)
    assert -86.0 <= lo <= hi <= -85.4
    assert abs(0.5 * (lo + hi) + 85.6) < 0.1


def test_floors_of_W_and_Z():
    t = table()
    ls, pieces = lambda_star(t["rho"], t["sigma"], Interval(1e-20), t["gamma"], t["m"], 1)
    assert float(pieces["Wbar"].lo) == 2.0 and float(pieces["Wbar"].hi) == 2.0
    assert float(pieces["Zbar"].lo) == 2.0 and float(pieces["Zbar"].hi) == 2.0
    # no overflow for extreme inputs either
    ls, _ = lambda_star(t["rho"], t["sigma"], Interval(1e-300), t["gamma"], t["m"], 1)
    assert 0 < float(ls.lo)


def test_verdict_with_table():
    t = table()
    pp = ProofParams(t["rho"], t["sigma"], Interval(10.0 ** -91.5), t["E"], t["gamma"], 1, t["m"])
    assert check_kam(pp).verdict == "PROVED"
    pp = ProofParams(t["rho"], t["sigma"], Interval(10.0 ** -80), t["E"], t["gamma"], 1, t["m"])
    pp = check_kam(pp)
    assert pp.verdict == "NOT-PROVED" and "lambda" in pp.failing


def test_verdict_hypotheses():
    t = table()
    pp = ProofParams(t["rho"], t["sigma"], Interval(1e-100), t["E"], t["gamma"], 1, Interval(-1.0))
    assert check_kam(pp).failing.startswith("nondegeneracy")


# --- pipeline level ------------------------------------------------------------------------------

def test_tail_inequality_spot_check(small_pipeline):
    """Explicit norms beyond R_I (computed with S = 7) respect E zeta^l a^s."""
    led, H = small_pipeline["ledger"], small_pipeline["H"]
    res = Propagator(led, small_pipeline["cfg"].omega_target, led.R_I).run()
    p = res.params
    nb = H.block_norms(7)
    for s in range(led.R_I + 1, 8):
        for l in range(led.lmax + 1):
            bound = float(p.E.hi) * float(p.zeta.hi) ** l * float(p.a.hi) ** s
            assert float(nb.hi[l, s]) <= bound


def test_domination_small(small_pipeline):
    bad, _ = domination_violations(small_pipeline["ledger"], small_pipeline["cfg"].omega_target)
    assert bad == []


def test_estimate_eps0_proves(integrable_pipeline):
    led = integrable_pipeline["ledger"]
    w = integrable_pipeline["cfg"].omega_target
    g, _ = diophantine_gamma(w, 1, cf=noble_cf(43, 74, 18, 31))
    pp, res = estimate(led, w, 60, g)
    assert pp.verdict == "PROVED"
    assert pp.log10_lambda < -300


def test_estimate_named_failure_on_bad_ledger(small_pipeline):
    led = small_pipeline["ledger"]
    bad = Ledger(led.lmax, led.K, led.R_I, dict(led.g), dict(led.h), dict(led.hat),
                 dict(led.tail), dict(led.xi), Interval(1e-9))
    w = small_pipeline["cfg"].omega_target
    g, _ = diophantine_gamma(w, 1, cf=noble_cf(43, 74, 18, 31))
    pp, _ = estimate(bad, w, 60, g)
    assert pp.verdict == "NOT-PROVED" and pp.failing.startswith("nondegeneracy")


def test_bundled_sample_is_not_proved():
    from importlib import resources
    from kamcap.formats import read_freq
    from kamcap.normalizer import normalize
    from kamcap.tfseries import HamiltonianState, read_tfh
    base = resources.files("kamcap") / "data"
    H, lmax, K, R_I = read_tfh(base / "sample.tfh")
    w = read_freq(base / "sample.freq")
    _, _, led = normalize(HamiltonianState.from_series(w, H, lmax, K, R_I), R_I)
    g, _ = diophantine_gamma(w, 1, cf=noble_cf(43, 74, 18, 31))
    pp, _ = estimate(led, w, 100, g)
    assert pp.verdict == "NOT-PROVED" and pp.failing
