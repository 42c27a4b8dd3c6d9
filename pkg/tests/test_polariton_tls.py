import math

import numpy as np
import pytest

from fluxmech.backaction import KerrModeConfig, minimum_threshold
from fluxmech.device import DEVICE_2, FluxPoint
from fluxmech.polariton_tls import (DEFAULT_GAMMA, DEFAULT_GAMMA_PHI, TransitionTls, count_lobes,
                                    drive_amplitude, enumerate_transitions, lobe_onsets, tls_fixed_points,
                                    tls_flow, tls_jacobian, tls_stability, tls_unstable,
                                    union_instability_map)
from fluxmech.spectrum import coupling_g, flux_for_transmon_frequency, polariton_spectrum

TWO_PI = 2 * math.pi
MHZ = TWO_PI * 1e6
PHI_RES = float(flux_for_transmon_frequency(DEVICE_2, DEVICE_2.omega_c))
FLUX = FluxPoint(PHI_RES, 9e-3)


def transitions(**kw):
    sp = polariton_spectrum(DEVICE_2, FLUX)
    return enumerate_transitions(sp, DEVICE_2.omega_m, DEVICE_2.gamma_m, g_plus_ref=TWO_PI * 160e3, **kw)


@pytest.fixture(scope="module")
def default_map():
    eps = TWO_PI * np.geomspace(0.01e6, 100e6, 60)
    wds = TWO_PI * np.arange(5.40e9, 5.97e9, 1e6)
    trs = transitions()
    return trs, union_instability_map(trs, eps, wds)


# ---------------------------------------------------------------- transition table

def test_default_rates_and_weights():
    trs = {t.label: t for t in transitions()}
    assert [t / MHZ for t in DEFAULT_GAMMA.values()] == pytest.approx([10, 10, 18, 14])
    assert [t / MHZ for t in DEFAULT_GAMMA_PHI.values()] == pytest.approx([4, 4, 8, 9])
    assert trs["minus"].thermal_weight == 0.82 and trs["plus"].thermal_weight == 0.82
    assert trs["minus_alpha"].thermal_weight == 0.10 and trs["minus_beta"].thermal_weight == 0.10
    assert abs(trs["plus"].g_i) == pytest.approx(TWO_PI * 160e3)


def test_zero_field_gives_zero_coupling():
    sp = polariton_spectrum(DEVICE_2, FluxPoint(PHI_RES, 0.0))
    for t in enumerate_transitions(sp, DEVICE_2.omega_m, DEVICE_2.gamma_m):
        assert t.g_i == 0.0


def test_upper_coupling_matches_device_model():
    sp = polariton_spectrum(DEVICE_2, FLUX)
    trs = {t.label: t for t in enumerate_transitions(sp, DEVICE_2.omega_m, DEVICE_2.gamma_m)}
    assert trs["plus"].g_i == pytest.approx(coupling_g(DEVICE_2, FLUX), rel=1e-12)


def test_transition_validation():
    t = transitions()[0]
    with pytest.raises(ValueError):
        t.with_(gamma_i=0.0)
    with pytest.raises(ValueError):
        t.with_(thermal_weight=1.5)
    sp = polariton_spectrum(DEVICE_2, FLUX)
    with pytest.raises(ValueError):
        enumerate_transitions(sp, DEVICE_2.omega_m, DEVICE_2.gamma_m, weights={"g": 0.9, "-": 0.2})


# ---------------------------------------------------------------- fixed points and stability

def test_ground_state_without_drive():
    (fp,) = tls_fixed_points(transitions()[1], DEVICE_2.omega_c, 0.0)
    assert fp.as_array().tolist() == [-1.0, 0, 0, 0, 0]


def test_uncoupled_saturation_closed_form_and_monotone():
    t = transitions()[1].with_(g_i=0.0)
    G2 = t.transverse_rate
    prev = -1.0
    for eps in TWO_PI * np.geomspace(1e3, 1e9, 200):
        (fp,) = tls_fixed_points(t, t.omega_i, eps)
        w = 4 * eps ** 2 * G2 / (t.gamma_i * G2 ** 2 + 4 * eps ** 2 * G2)
        assert fp.s == pytest.approx(w - 1, abs=1e-12)
        assert prev <= fp.s <= 0
        prev = fp.s


def test_static_displacement_opposes_coupling():
    t = transitions()[1]
    for g in (t.g_i, -t.g_i):
        tt = t.with_(g_i=g)
        (fp,) = tls_fixed_points(tt, tt.omega_i, 2 * MHZ)[:1]
        assert fp.u == pytest.approx(-(g / 2) * (fp.s + 1) / tt.mech_stiffness, rel=1e-12)
        assert np.sign(fp.u) == -np.sign(g)


@pytest.fixture(scope="module")
def random_tls_points():
    trs = transitions()
    rng = np.random.default_rng(1)
    out = []
    for k in range(100):
        t = trs[k % 4]
        wd = t.omega_i + TWO_PI * rng.uniform(-30e6, 30e6)
        e = TWO_PI * rng.uniform(0.1e6, 50e6)
        out += [(t, wd, e, fp) for fp in tls_fixed_points(t, wd, e)]
    return out


def test_fixed_points_physical_and_stationary(random_tls_points):
    for t, wd, e, fp in random_tls_points:
        assert -1 <= fp.s <= 0
        f = tls_flow(fp.as_array(), t, wd, e)
        assert np.abs(f).max() < 1e-8 * max(t.gamma_i, e)


def test_jacobian_against_finite_differences(random_tls_points):
    worst = 0.0
    for t, wd, e, fp in random_tls_points:
        z = fp.as_array()
        S = tls_jacobian(t, fp, wd, e)
        h = 1e-7
        F = np.array([(tls_flow(z + h * d, t, wd, e) - tls_flow(z - h * d, t, wd, e)) / (2 * h)
                      for d in np.eye(5)]).T
        worst = max(worst, np.abs(F - S).max() / np.abs(S).max())
    assert worst < 1e-6


def test_spectrum_structure(random_tls_points):
    for t, wd, e, fp in random_tls_points:
        lam = tls_stability(t, fp, wd, e)
        scale = np.abs(lam).max()
        real = lam[np.abs(lam.imag) <= 1e-10 * scale]
        cplx = lam[np.abs(lam.imag) > 1e-10 * scale]
        assert len(real) in (1, 3, 5)
        for x in cplx:
            assert np.min(np.abs(lam - np.conj(x))) < 1e-10 * scale


def test_undriven_eigenvalues():
    t = transitions()[1]
    wd = t.omega_i + 3 * MHZ
    (fp,) = tls_fixed_points(t, wd, 0.0)
    lam = np.sort_complex(tls_stability(t, fp, wd, 0.0))
    G2 = t.transverse_rate
    expected = np.sort_complex(np.array([-t.gamma_i, -G2 + 3j * MHZ, -G2 - 3j * MHZ,
                                         -t.gamma_m / 2 + 1j * t.omega_m, -t.gamma_m / 2 - 1j * t.omega_m]))
    assert np.allclose(lam, expected, rtol=1e-12)


def test_blue_drive_destabilizes_mechanics_first():
    t = transitions()[1]
    wd = t.omega_i + t.omega_m
    for e in TWO_PI * np.geomspace(1e4, 1e8, 400):
        ei = drive_amplitude(t, e)
        (fp,) = tls_fixed_points(t, wd, ei)[:1]
        S = tls_jacobian(t, fp, wd, ei)
        lam, W = np.linalg.eig(S)
        k = int(np.argmax(lam.real))
        if lam[k].real > 0:
            w = W[:, k] / np.linalg.norm(W[:, k])
            assert np.sum(np.abs(w[3:]) ** 2) > 0.5
            break
    else:
        pytest.fail("no instability on the ramp")


# ---------------------------------------------------------------- union map

def test_four_lobes_at_low_power(default_map):
    _, m = default_map
    k = np.searchsorted(m.epsilon, TWO_PI * 20e6, side="right")
    assert count_lobes(m.unstable[:k]) == 4
    assert not m.holes.any()


def test_onset_order(default_map):
    _, m = default_map
    on = lobe_onsets(m)
    assert max(on["minus"], on["plus"]) < on["minus_alpha"] < on["minus_beta"] < math.inf


def test_lobes_sit_near_their_transitions(default_map):
    trs, m = default_map
    for t in trs:
        cols = m.omega_d[m.transition_mask(t.label).any(axis=0)]
        assert cols.min() > t.omega_i - 5 * MHZ
        assert cols.min() < t.omega_i + 2 * t.omega_m


def test_zero_weight_gating(default_map):
    trs, m = default_map
    gated = [t.with_(thermal_weight=0.0) if t.label == "minus_beta" else t for t in trs]
    g = union_instability_map(gated, m.epsilon, m.omega_d)
    assert not g.transition_mask("minus_beta").any()
    outside = ~m.transition_mask("minus_beta")
    assert np.array_equal(g.attribution[outside], m.attribution[outside])


def test_ground_only_weights_leave_polariton_lobes():
    trs = transitions(weights={"g": 0.82})
    eps = TWO_PI * np.geomspace(0.01e6, 20e6, 30)
    wds = TWO_PI * np.arange(5.40e9, 5.97e9, 2e6)
    m = union_instability_map(trs, eps, wds)
    on = lobe_onsets(m)
    assert on["minus_alpha"] == math.inf and on["minus_beta"] == math.inf
    assert count_lobes(m.unstable) == 2


def test_monotone_in_drive_at_low_power(default_map):
    _, m = default_map
    k = np.searchsorted(m.epsilon, TWO_PI * 20e6, side="right")
    for bit in range(4):
        mask = ((m.attribution[:k] >> bit) & 1).astype(bool)
        assert not np.any(mask[:-1] & ~mask[1:])


@pytest.mark.xfail(strict=True, reason="at drives above about 29 MHz the low branch restabilizes "
                   "through saturation, so single-transition ramps are not monotone")
def test_monotone_in_drive_full_range(default_map):
    _, m = default_map
    for bit in range(4):
        mask = ((m.attribution >> bit) & 1).astype(bool)
        assert not np.any(mask[:-1] & ~mask[1:])


def test_upper_lobe_onset_near_kerr_boundary():
    t = transitions()[1]
    eps = TWO_PI * np.geomspace(0.01e6, 100e6, 400)
    dets = np.linspace(0, 20, 81) * MHZ
    onset = math.inf
    for d in dets:
        for e in eps:
            if tls_unstable(t, t.omega_i + d, e):
                onset = min(onset, drive_amplitude(t, e))
                break
    cfg = KerrModeConfig(t.omega_i, 0.0, 2 * t.transverse_rate, abs(t.g_i), t.omega_m, t.gamma_m)
    n, det = minimum_threshold(cfg, dets)
    kerr_eps = math.sqrt(n * ((det + cfg.static_kerr * n) ** 2 + cfg.kappa ** 2 / 4))
    assert 0.5 < onset / kerr_eps < 2.0
