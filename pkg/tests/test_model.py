from decimal import Decimal, localcontext

import numpy as np
import pytest
from scipy.optimize import brentq

from kamcap.formats import read_freq
from kamcap.interval import Interval, iv_from_decimal
from kamcap.model import (
    ModelConfig,
    NewtonConfig,
    build_control,
    build_equilibrium,
    build_H0,
    build_perturbation,
    check_nonresonant,
    h0_prime,
    omega_D,
    q_profile,
    taylor_coefficients,
)
from kamcap.tfseries import ResonanceError, TFSeries, tf_norm

from conftest import encloses
from oracles import fourier_cos_sin

PSI = iv_from_decimal("0.35")


def noble_decimal(n1, d1, n2, d2):
    with localcontext() as ctx:
        ctx.prec = 50
        s = (1 + Decimal(5).sqrt()) / 2
        return (n1 + s * n2) / (d1 + s * d2)


def test_safety_factor_at_axis():
    assert q_profile(0.0) == 1.0
    assert h0_prime(0.0) == 1.0
    psi = np.linspace(0, 0.9, 19)
    assert np.allclose(q_profile(psi) * h0_prime(psi), 1.0, rtol=1e-14)


def test_omega_tilde():
    a = taylor_coefficients(PSI)
    assert encloses(a[1], Decimal("0.58678125"))
    assert encloses(a[2], Decimal("-0.4459375"))
    assert float(a[1].hi - a[1].lo) < 1e-15


def test_resonant_surfaces():
    p32 = brentq(lambda p: q_profile(p) - 1.5, 0.0, 0.9)
    p2 = brentq(lambda p: q_profile(p) - 2.0, 0.0, 0.9)
    assert abs(p32 - 0.266) < 1e-3
    assert abs(p2 - 0.456) < 1e-3


def test_perturbation():
    assert build_perturbation(Interval(0.0)).is_zero()
    v = build_perturbation(iv_from_decimal("0.003"))
    assert {(l, k1, k2) for l, k1, k2, _, _ in v.terms()} == {(0, 2, -1), (0, 3, -2)}
    for _, _, _, c, s in v.terms():
        assert encloses(c, Decimal("0.003")) and float(s.hi) == 0.0
    assert encloses(tf_norm(v), Decimal("0.006"))


def test_control_zero_for_zero_perturbation():
    om, h = build_equilibrium(PSI)
    f = build_control(om, h.plane(2), build_perturbation(Interval(0.0)))
    assert f.is_zero()


def test_control_harmonics_and_coefficients():
    om, h = build_equilibrium(PSI)
    eps = 0.003
    f = build_control(om, h.plane(2), build_perturbation(iv_from_decimal("0.003")))
    assert {(k1, k2) for _, k1, k2, _, _ in f.terms()} == {(1, -1), (4, -2), (5, -3), (6, -4)}
    # independent oracle: f = -(1/2) H''(Psi) (d_theta X)^2 minus its mean, with
    # d_theta X = -eps [2/d1 cos(2t - p) + 3/d2 cos(3t - 2p)]
    d1, d2 = 2 * 0.58678125 - 1, 3 * 0.58678125 - 2
    assert abs(d1 - 0.1735625) < 1e-15 and abs(d2 + 0.23965625) < 1e-15
    H2 = -0.891875

    def fun(t, p):
        dX = -eps * (2 / d1 * np.cos(2 * t - p) + 3 / d2 * np.cos(3 * t - 2 * p))
        return -0.5 * H2 * dX ** 2

    for _, k1, k2, c, s in f.terms():
        c0, s0 = fourier_cos_sin(fun, k1, k2)
        assert abs(float(c.mid) - c0) < 1e-12 * max(1.0, abs(c0))
        assert float(c.lo) - 1e-15 <= c0 <= float(c.hi) + 1e-15
        assert abs(s0) < 1e-15 and float(s.lo) <= 0.0 <= float(s.hi)
    # the mean is dropped
    assert f.coef(0, 0, 0)[0].mid == 0.0


def test_frequency_seed():
    w = float(omega_D().mid)
    xi0 = (w - 0.58678125) / -0.891875
    assert abs(xi0 - 0.006589) < 2e-6


def test_nonresonance_check():
    check_nonresonant(omega_D(), 3)
    with pytest.raises(ResonanceError):
        check_nonresonant(Interval(0.5), 3)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig.from_strings(eps="-0.1")
    with pytest.raises(ValueError):
        ModelConfig.from_strings(Psi="1.2")
    with pytest.raises(ResonanceError):
        ModelConfig.from_strings(omega="0.5")
    assert ModelConfig.from_strings(R_I=5).trunc == 30


def test_omega_target_equal_to_omega_tilde_gives_zero_shift():
    cfg = ModelConfig.from_strings(eps="0", omega="0.58678125", R_I=2)
    st, info = build_H0(cfg)
    assert encloses(info["xi_init"], 0.0)


def test_integrable_H0(integrable_pipeline, tmp_path):
    st, info = integrable_pipeline["H0"], integrable_pipeline["info"]
    for (l, s), b in st.blocks.items():
        assert b.degree() == 0
        assert s <= 1
    # psi -> psi + xi with H0'(Psi + xi) = omega_D
    xi = float(info["xi_init"].mid)
    assert abs(h0_prime(0.35 + xi) - float(omega_D().mid)) < 1e-9
    # B encloses the target after the translation
    assert float(info["B"].lo) - 1e-12 <= float(omega_D().mid) <= float(info["B"].hi) + 1e-12


def test_files_written(tmp_path):
    cfg = ModelConfig.from_strings(eps="0", R_I=2)
    build_H0(cfg, tfh_path=tmp_path / "h.tfh", freq_path=tmp_path / "freq")
    w = read_freq(tmp_path / "freq")
    assert encloses(w, noble_decimal(43, 74, 18, 31))
    assert abs(float(w.mid) - 0.580905) < 5e-7
    assert (tmp_path / "h.tfh").read_text().startswith("TFH v1\n4 3 2\n")


def test_newton_iterations_at_eps_0003():
    # the truncation order only changes far harmonics; R_I = 4 keeps this quick
    cfg = ModelConfig.from_strings(eps="0.003", R_I=4)
    st, info = build_H0(cfg, NewtonConfig())
    assert info["iterations"] <= 3
    assert float(info["B"].lo) - 1e-8 <= float(cfg.omega_target.mid) <= float(info["B"].hi) + 1e-8


def test_block_norms_decay(small_pipeline):
    nb = small_pipeline["H0"].block_norms(4)
    tops = [float(nb.hi[:, s].max()) for s in range(1, 5)]
    assert all(b < a for a, b in zip(tops, tops[1:]))
    assert tops[-1] / tops[0] < 1e-4
