import math
import warnings

import numpy as np
import pytest
from scipy import constants

from fluxmech.calibration import (CalibrationRecord, PoleProximityWarning, bose_occupation,
                                  bose_temperature, dispersive_shift, fit_atten_product,
                                  output_gain, photon_number_for_power, reflection_fit,
                                  reflection_model, sideband_psd, sideband_thermometry,
                                  stark_photon_number, stark_shift, transmitted_power)

TWO_PI = 2 * math.pi
MHZ = TWO_PI * 1e6
OMEGA_M = TWO_PI * 3.97e6
THERMO = dict(g=TWO_PI * 22e3, kappa=TWO_PI * 11.5e6, gamma_m=TWO_PI * 6.0, kappa_e=TWO_PI * 6.2e6,
              gain_dB=58.5, omega=TWO_PI * 5.884e9, omega_m=OMEGA_M)


# ---------------------------------------------------------------- dispersive shift and Stark

def test_dispersive_shift_device_value():
    J, delta, alpha = TWO_PI * 72e6, TWO_PI * (5.325e9 - 5.846e9), TWO_PI * 284e6
    chi = dispersive_shift(J, delta, alpha, kappa_b=TWO_PI * 8e6)
    # partial-fraction form of the same two-level-plus-anharmonic-level shift
    oracle = J ** 2 / delta - J ** 2 / (delta - alpha)
    assert chi == pytest.approx(oracle, rel=1e-12)
    assert chi / MHZ == pytest.approx(-3.5103, abs=1e-4)
    assert abs(chi / MHZ + 3.5) <= 0.15


def test_dispersive_shift_transmon_limit():
    J, delta = TWO_PI * 50e6, TWO_PI * -1e9
    # an infinitely anharmonic transmon reduces to the two-level result J^2/Delta
    assert dispersive_shift(J, delta, TWO_PI * 1e15) == pytest.approx(J ** 2 / delta, rel=1e-5)


def test_dispersive_shift_poles():
    with pytest.raises(ZeroDivisionError):
        dispersive_shift(1.0, 0.0, 2.0)
    with pytest.raises(ZeroDivisionError):
        dispersive_shift(1.0, 2.0, 2.0)
    with pytest.warns(PoleProximityWarning):
        dispersive_shift(MHZ, 50 * MHZ, 300 * MHZ, kappa_b=8 * MHZ)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dispersive_shift(MHZ, -500 * MHZ, 300 * MHZ, kappa_b=8 * MHZ)


def test_stark_round_trip():
    chi = -3.51 * MHZ
    n = np.array([0.0, 0.3, 2.0, 17.5])
    shift = stark_shift(n, chi)
    assert np.all(shift[1:] > 0)
    assert np.allclose(stark_photon_number(shift, chi), n, rtol=1e-14)
    with pytest.raises(ZeroDivisionError):
        stark_photon_number(1.0, 0.0)


# ---------------------------------------------------------------- input and output lines

def test_atten_product_round_trip():
    w, kappa = TWO_PI * 5.846e9, TWO_PI * 9.7e6
    power = np.linspace(-130, -100, 8)
    n = photon_number_for_power(power, w, 17444.0, kappa)
    # direct oracle: n = P / (hbar w A (kappa^2/4))
    P = 1e-3 * 10 ** (power / 10)
    assert np.allclose(n, P / (constants.hbar * w * 17444.0 * kappa ** 2 / 4), rtol=1e-12)
    assert fit_atten_product(power, n, w, kappa) == pytest.approx(17444.0, rel=1e-10)


def test_atten_product_with_detuning_and_noise():
    w, kappa, det = TWO_PI * 5.846e9, TWO_PI * 9.7e6, 2 * MHZ
    power = np.linspace(-130, -100, 30)
    n = photon_number_for_power(power, w, 17444.0, kappa, det)
    rng = np.random.default_rng(0)
    noisy = n * (1 + 0.01 * rng.standard_normal(n.size))
    assert fit_atten_product(power, noisy, w, kappa, det) == pytest.approx(17444.0, rel=0.01)


def test_atten_product_validation():
    with pytest.raises(ValueError):
        fit_atten_product([-120.0], [1.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        fit_atten_product([-120.0, -110.0], [-1.0, -2.0], 1.0, 1.0)


def test_output_gain_round_trip_and_doubling():
    n = np.linspace(0, 2, 10)
    ke, w = TWO_PI * 6.2e6, TWO_PI * 5.864e9
    P = transmitted_power(n, 58.5, ke, w)
    assert output_gain(P, n, ke, w) == pytest.approx(58.5, abs=1e-9)
    assert output_gain(2 * P, n, ke, w) - 58.5 == pytest.approx(10 * math.log10(2), abs=1e-9)
    # a constant pedestal does not move the slope
    assert output_gain(P + 1e-15, n, ke, w) == pytest.approx(58.5, abs=1e-9)
    with pytest.raises(ValueError):
        output_gain(P[:2], n[:2], ke, w)
    with pytest.raises(ValueError):
        output_gain(-P, n, ke, w)


# ---------------------------------------------------------------- thermometry

def test_bose_round_trip():
    for n in (1e-3, 0.1, 1.0, 365.0, 1e5):
        T = bose_temperature(n, OMEGA_M)
        assert bose_occupation(T, OMEGA_M) == pytest.approx(n, rel=1e-10)
    assert bose_temperature(0.0, OMEGA_M) == 0.0
    assert bose_occupation(0.0, OMEGA_M) == 0.0
    with pytest.raises(ValueError):
        bose_temperature(-1.0, OMEGA_M)


def test_bose_temperature_high_temperature_limit():
    # k T ~ hbar w (n + 1/2) for n >> 1
    n = 365.0
    T = bose_temperature(n, OMEGA_M)
    assert T * 1e3 == pytest.approx(69.64, abs=0.01)
    approx = constants.hbar * OMEGA_M * (n + 0.5) / constants.k
    assert T == pytest.approx(approx, rel=1e-5)


def test_sideband_thermometry_round_trip():
    n_d = np.linspace(0, 2, 10)
    S = sideband_psd(n_d, 365.0, n_add=20.0, **THERMO)
    n_m, T = sideband_thermometry(S, n_d, **THERMO)
    assert n_m == pytest.approx(365.0, rel=1e-10)
    assert T * 1e3 == pytest.approx(70.0, abs=1.0)


def test_sideband_thermometry_with_noise():
    rng = np.random.default_rng(5)
    n_d = np.linspace(0.1, 2, 40)
    S = sideband_psd(n_d, 365.0, n_add=20.0, **THERMO)
    est = []
    for _ in range(50):
        noisy = S * (1 + 1e-3 * rng.standard_normal(S.size))
        est.append(sideband_thermometry(noisy, n_d, **THERMO)[0])
    assert np.mean(est) == pytest.approx(365.0, rel=0.01)


def test_sideband_psd_floor_is_added_noise():
    S0 = sideband_psd(0.0, 365.0, n_add=20.0, **THERMO)
    A = 10 ** (THERMO["gain_dB"] / 10)
    assert S0 == pytest.approx(constants.hbar * THERMO["omega"] * A * 20.5, rel=1e-12)


def test_thermometry_validation():
    with pytest.raises(ValueError):
        sideband_thermometry([1.0], [1.0], **THERMO)
    with pytest.raises(ValueError):
        sideband_thermometry([2.0, 1.0], [0.0, 1.0], **THERMO)


# ---------------------------------------------------------------- reflection

@pytest.fixture
def trace():
    w = TWO_PI * np.linspace(5.8e9, 5.9e9, 801)
    return w, reflection_model(w, TWO_PI * 6.2e6, TWO_PI * 3e6, TWO_PI * 5.85e9)


def test_reflection_model_limits(trace):
    w, y = trace
    assert np.abs(y).max() <= 1 + 1e-12
    c = int(np.argmin(np.abs(w - TWO_PI * 5.85e9)))
    assert abs(y[c]) == pytest.approx(abs(3e6 - 6.2e6) / 9.2e6, rel=1e-3)
    # lossless and uncoupled limits
    assert np.allclose(np.abs(reflection_model(w, MHZ, 0.0, w[400])), 1.0)
    assert np.allclose(reflection_model(w, 0.0, MHZ, w[400]), 1.0)


def test_reflection_fit_exact_complex(trace):
    w, y = trace
    f = reflection_fit(w, y, kappa_in=TWO_PI * 1e6)
    assert f.kappa_e / MHZ == pytest.approx(6.2, rel=1e-6)
    assert f.kappa_rest / MHZ == pytest.approx(3.0, rel=1e-6)
    assert f.omega_c / TWO_PI == pytest.approx(5.85e9, rel=1e-12)
    assert f.kappa_i / MHZ == pytest.approx(2.0, rel=1e-5)


def test_reflection_fit_magnitude_branch(trace):
    w, y = trace
    over = reflection_fit(w, np.abs(y))
    under = reflection_fit(w, np.abs(y), overcoupled=False)
    assert over.kappa_e / MHZ == pytest.approx(6.2, rel=1e-5)
    assert under.kappa_e / MHZ == pytest.approx(3.0, rel=1e-5)
    assert under.kappa_rest == pytest.approx(over.kappa_e, rel=1e-5)


def test_reflection_fit_noise_spread_matches_covariance(trace):
    w, y = trace
    rng = np.random.default_rng(0)
    ks, sig = [], []
    for _ in range(50):
        noise = 0.01 * (rng.standard_normal(w.size) + 1j * rng.standard_normal(w.size)) / math.sqrt(2)
        r = reflection_fit(w, y * (1 + noise))
        ks.append(r.kappa_e)
        sig.append(r.sigmas["kappa_e"])
    assert np.mean(ks) / MHZ == pytest.approx(6.2, rel=0.01)
    assert np.std(ks) / np.mean(sig) == pytest.approx(1.0, abs=0.3)


def test_reflection_fit_span_check(trace):
    w, y = trace
    with pytest.raises(ValueError):
        reflection_fit(w[380:420], y[380:420])


def test_calibration_record_to_dict():
    r = CalibrationRecord(chi=-1.0, n_m=365.0)
    d = r.to_dict()
    assert d["chi"] == -1.0 and d["n_m"] == 365.0 and math.isnan(d["gain_dB"])
