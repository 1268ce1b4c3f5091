from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
import pytest

from kamcap.freqmap import (
    CHAOTIC,
    REGULAR,
    OrbitSample,
    RationalPair,
    analyse_orbit,
    build_fam,
    detect_plateaus,
    integrate_orbit,
    naff_frequency,
    noble_mediant,
    perturbation_terms,
    read_csv,
    regular_branch,
    simplest_rational,
    write_csv,
    write_gnuplot,
)
from kamcap.model import h0_prime


def noble_decimal(n1, d1, n2, d2):
    with localcontext() as ctx:
        ctx.prec = 40
        s = (1 + Decimal(5).sqrt()) / 2
        return (n1 + s * n2) / (d1 + s * d2)


def samples(omegas, psi0=0.35, step=1e-4):
    return [OrbitSample(psi0 + i * step, float(w), 1.0) for i, w in enumerate(omegas)]


def test_naff_pure_tone():
    n = np.arange(1 << 15)
    nu, amp = naff_frequency(np.exp(2j * np.pi * 0.58 * n))
    assert abs(nu - 0.58) < 1e-9
    assert abs(amp - 1.0) < 1e-3


def test_naff_real_angles_and_two_tones():
    n = np.arange(1 << 14)
    nu, _ = naff_frequency(2 * np.pi * 0.3141 * n)
    assert abs(nu - 0.3141) < 1e-9
    x = np.exp(2j * np.pi * 0.3 * n) + 0.4 * np.exp(2j * np.pi * 0.41 * n)
    nu, _ = naff_frequency(x)
    assert abs(nu - 0.3) < 1e-6


def test_naff_too_short():
    with pytest.raises(ValueError):
        naff_frequency(np.zeros(10, complex))


def test_integrable_orbit_is_a_rigid_rotation():
    th, psi, esc = integrate_orbit(0.35, eps=0.0, periods=1000, substeps=8)
    assert not esc and psi == 0.35
    n = np.arange(th.size)
    assert np.allclose(th, 2 * np.pi * h0_prime(0.35) * n, rtol=1e-12, atol=1e-9)


def test_integrable_frequency():
    s = analyse_orbit(0.35, 0.0, periods=32769)
    assert abs(s.omega - 0.58678125) < 1e-8
    assert s.flag == REGULAR


def _one_period(psi, theta, substeps, eps=0.003):
    th, p, _ = integrate_orbit(psi, theta, 0.0, eps, True, 1, substeps)
    return p, th[-1]


def test_second_order_convergence():
    ref = np.array(_one_period(0.355, 0.7, 2048))
    err = [np.abs(np.array(_one_period(0.355, 0.7, m)) - ref).max() for m in (16, 32, 64)]
    r1, r2 = err[0] / err[1], err[1] / err[2]
    assert 3.5 < r1 < 4.5 and 3.5 < r2 < 4.5


def test_period_map_preserves_area():
    h = 1e-6
    p0, t0 = 0.356, 1.3
    a = np.array(_one_period(p0 + h, t0, 64)) - np.array(_one_period(p0 - h, t0, 64))
    b = np.array(_one_period(p0, t0 + h, 64)) - np.array(_one_period(p0, t0 - h, 64))
    det = (a[0] * b[1] - a[1] * b[0]) / (4 * h * h)
    assert abs(det - 1.0) < 1e-6


def test_perturbation_terms():
    k1, k2, c, s = perturbation_terms(0.003, with_control=False)
    assert sorted(zip(k1.tolist(), k2.tolist())) == [(2, -1), (3, -2)]
    k1, k2, c, s = perturbation_terms(0.003, with_control=True)
    assert {(1, -1), (4, -2), (5, -3), (6, -4)} <= set(zip(k1.tolist(), k2.tolist()))
    k1, *_ = perturbation_terms(0.0)
    assert k1.size == 0 or np.all(perturbation_terms(0.0)[2] == 0)


def test_simplest_rational():
    assert simplest_rational(0.3333, 0.3334) == Fraction(1, 3)
    assert simplest_rational(Fraction(43, 74) - Fraction(1, 10**6),
                             Fraction(43, 74) + Fraction(1, 10**6)) == Fraction(43, 74)
    assert simplest_rational(2, 2) == 2
    with pytest.raises(ValueError):
        simplest_rational(0.5, 0.4)


def test_plateau_constant_and_monotone():
    flat = samples([0.58] * 10)
    pl = detect_plateaus(flat)
    assert len(pl) == 1 and pl[0][0] == Fraction(29, 50)
    assert pl[0][1] == (flat[0].psi0, flat[-1].psi0)
    mono = samples(0.58 + 1e-4 * np.arange(30))
    assert detect_plateaus(mono) == []
    (length, _), ok = regular_branch(mono)
    assert length == 30 and ok


def test_plateau_breaks_branch():
    om = list(0.58 + 1e-4 * np.arange(12)) + [0.5812] * 5 + list(0.5813 + 1e-4 * np.arange(12))
    (length, (i, j)), ok = regular_branch(samples(om))
    assert length == 12 and not ok
    pl = detect_plateaus(samples(om))
    assert [q for q, _ in pl] == [simplest_rational(0.5812 - 1e-6, 0.5812 + 1e-6)]


def test_detect_plateaus_needs_sorted_input():
    s = samples([0.5, 0.5, 0.5])
    s.reverse()
    with pytest.raises(ValueError):
        detect_plateaus(s)


@pytest.mark.parametrize("a,b,expected", [
    ("43/74", "18/31", noble_decimal(43, 74, 18, 31)),
    ("0/1", "1/1", noble_decimal(0, 1, 1, 1)),
    ("1/2", "1/1", noble_decimal(1, 2, 1, 1)),
])
def test_noble_mediant(a, b, expected):
    assert abs(noble_mediant(RationalPair.parse(a, b)) - float(expected)) < 1e-15


def test_noble_examples():
    assert f"{noble_mediant(RationalPair.parse('43/74', '18/31')):.6f}" == "0.580905"
    assert f"{noble_mediant(RationalPair.parse('0/1', '1/1')):.10f}" == "0.6180339887"
    assert f"{noble_mediant(RationalPair.parse('1/2', '1/1')):.6f}" == "0.723607"


def test_rational_pair_validation():
    with pytest.raises(ValueError):
        RationalPair(2, 4, 1, 3)
    with pytest.raises(ValueError):
        RationalPair(1, 0, 1, 3)


def test_controlled_branch_survives_where_uncontrolled_breaks():
    # reduced protocol: 40 orbits x 8193 periods
    on = build_fam(0.35, 0.365, 40, 0.0012, True, 8193)
    off = build_fam(0.32, 0.38, 40, 0.0012, False, 8193)
    assert regular_branch(on)[1]
    assert not regular_branch(off)[1]
    assert sum(s.flag == CHAOTIC for s in off) > sum(s.flag == CHAOTIC for s in on)


def test_csv_round_trip(tmp_path):
    s = build_fam(0.35, 0.351, 3, 0.0, True, 1025)
    write_csv(tmp_path / "f.csv", s)
    back = read_csv(tmp_path / "f.csv")
    assert [(b.psi0, b.omega, b.amplitude, b.flag) for b in back] == \
        [(a.psi0, a.omega, a.amplitude, a.flag) for a in s]
    write_gnuplot(tmp_path / "f.gp", tmp_path / "f.csv")
    assert "plot" in (tmp_path / "f.gp").read_text()
