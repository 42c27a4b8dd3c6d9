"""Calibration chain: ac-Stark photon number, output gain, sideband thermometry
and output-port reflection.

Each quantity has a forward model (used to make synthetic data) and an
inversion or fit. Rates are angular (rad/s) throughout; powers are in watts
unless a name says dBm.
"""

from dataclasses import asdict, dataclass
import math
import warnings

import numpy as np
from scipy import constants
from scipy.optimize import least_squares

from .backaction import power_to_epsilon
from .errors import ConvergenceError


class PoleProximityWarning(UserWarning):
    """The dispersive formula is evaluated close to one of its poles."""


@dataclass
class CalibrationRecord:
    chi: float = float("nan")
    atten_product: float = float("nan")
    gain_dB: float = float("nan")
    n_m: float = float("nan")
    T_mode: float = float("nan")
    kappa_e: float = float("nan")

    def to_dict(self):
        return asdict(self)


def dispersive_shift(J, delta, alpha_T, kappa_b=None):
    """``chi = -(J^2 / Delta) alpha_T / (Delta - alpha_T)`` with ``Delta = omega_q - omega_c``.

    When ``kappa_b`` is given, a :class:`PoleProximityWarning` is issued if
    ``|Delta|`` or ``|Delta - alpha_T|`` is below ``10 kappa_b``.
    """
    if delta == 0 or delta == alpha_T:
        raise ZeroDivisionError("dispersive shift is singular at Delta = 0 and Delta = alpha_T")
    if kappa_b is not None and min(abs(delta), abs(delta - alpha_T)) < 10 * kappa_b:
        warnings.warn("detuning within 10 kappa_b of a pole of the dispersive formula",
                      PoleProximityWarning, stacklevel=2)
    return -(J * J / delta) * alpha_T / (delta - alpha_T)


def stark_shift(n_d, chi):
    """Forward ac-Stark model: ``omega_q' - omega_q = -2 n_d chi``."""
    return -2 * np.asarray(n_d, dtype=float) * chi


def stark_photon_number(qubit_shift, chi):
    """Intracavity photon number from a measured qubit shift ``omega_q' - omega_q``."""
    if chi == 0:
        raise ZeroDivisionError("chi must be non-zero")
    return np.asarray(qubit_shift, dtype=float) / (-2 * chi)


def photon_number_for_power(power_dBm, omega_d, atten_product, kappa, detuning=0.0):
    """Mean photon number of a linear mode driven at ``power_dBm``."""
    eps = power_to_epsilon(power_dBm, omega_d, atten_product)
    return eps ** 2 / (kappa ** 2 / 4 + detuning ** 2)


def fit_atten_product(power_dBm, n_d, omega_d, kappa, detuning=0.0):
    """Input calibration constant from an (input power, photon number) sweep.

    Fits ``n_d = s * P`` through the origin (P in watts) and inverts
    ``s = 1 / (hbar omega_d atten (kappa^2/4 + detuning^2))``.
    """
    P = 1e-3 * 10 ** (np.asarray(power_dBm, dtype=float) / 10)
    n = np.asarray(n_d, dtype=float)
    if P.size < 2:
        raise ValueError("need at least two sweep points")
    slope = float(np.dot(P, n) / np.dot(P, P))
    if slope <= 0:
        raise ValueError("non-positive slope in the Stark sweep")
    return 1.0 / (slope * constants.hbar * omega_d * (kappa ** 2 / 4 + detuning ** 2))


def transmitted_power(n_d, gain_dB, kappa_e, omega):
    """Forward model ``P_d = hbar omega A_P n_d kappa_e`` (watts)."""
    A = 10 ** (gain_dB / 10)
    return constants.hbar * omega * A * np.asarray(n_d, dtype=float) * kappa_e


def output_gain(transmitted_powers, n_d, kappa_e, omega):
    """Net output gain in dB from the slope of ``P_d`` against ``n_d``.

    The fit allows an offset so that a constant noise pedestal does not bias
    the slope.
    """
    P = np.asarray(transmitted_powers, dtype=float)
    n = np.asarray(n_d, dtype=float)
    if P.size < 3:
        raise ValueError("need at least three (P_d, n_d) pairs")
    slope, _ = np.polyfit(n, P, 1)
    if slope <= 0:
        raise ValueError("negative slope: output power must grow with photon number")
    return 10 * math.log10(slope / (constants.hbar * omega * kappa_e))


def sideband_psd(n_d, n_m, g, kappa, gamma_m, kappa_e, gain_dB, omega, omega_m, n_add=0.0):
    """Output PSD at the sideband peak, ``S_VV`` in W/Hz."""
    A = 10 ** (gain_dB / 10)
    n_d = np.asarray(n_d, dtype=float)
    occ = 0.5 + n_add + (kappa_e / gamma_m) * 16 * g * g * n_d * n_m / (kappa ** 2 + 4 * omega_m ** 2)
    return constants.hbar * omega * A * occ


def bose_temperature(n_m, omega_m):
    """Mode temperature for a thermal occupation ``n_m`` (0 for ``n_m = 0``)."""
    if n_m < 0:
        raise ValueError("n_m must be non-negative")
    if n_m == 0:
        return 0.0
    return constants.hbar * omega_m / (constants.k * math.log1p(1.0 / n_m))


def bose_occupation(T, omega_m):
    if T <= 0:
        return 0.0
    return 1.0 / math.expm1(constants.hbar * omega_m / (constants.k * T))


def sideband_thermometry(svv, n_d, g, kappa, gamma_m, kappa_e, gain_dB, omega, omega_m):
    """Thermal phonon number and mode temperature from the sideband PSD slope.

    Only the slope of ``S_VV`` against ``n_d`` is used, so the added noise
    ``n_add`` drops out. Returns ``(n_m, T_mode)``.
    """
    S = np.asarray(svv, dtype=float)
    n = np.asarray(n_d, dtype=float)
    if S.size < 2:
        raise ValueError("need at least two points")
    slope, _ = np.polyfit(n, S, 1)
    if slope <= 0:
        raise ValueError("non-positive slope in sideband thermometry")
    A = 10 ** (gain_dB / 10)
    per_phonon = constants.hbar * omega * A * (kappa_e / gamma_m) * 16 * g * g / (
        kappa ** 2 + 4 * omega_m ** 2)
    n_m = slope / per_phonon
    return n_m, bose_temperature(n_m, omega_m)


def reflection_model(omega, kappa_e, kappa_rest, omega_c):
    """``S11 = 1 - kappa_e / ((kappa_rest + kappa_e)/2 + i(omega - omega_c))``.

    ``kappa_rest`` is ``kappa_i + kappa_in``; only the sum enters.
    """
    w = np.asarray(omega, dtype=float)
    return 1 - kappa_e / ((kappa_rest + kappa_e) / 2 + 1j * (w - omega_c))


@dataclass
class ReflectionFit:
    kappa_e: float
    kappa_rest: float
    omega_c: float
    sigmas: dict
    kappa_i: float | None = None
    kappa_in: float | None = None
    success: bool = True


def _dip_guess(w, mag):
    k = int(np.argmin(mag))
    depth = 1 - mag[k]
    half = 1 - depth / 2
    below = np.nonzero(mag < half)[0]
    width = w[below[-1]] - w[below[0]] if below.size > 1 else (w[-1] - w[0]) / 20
    return w[k], max(width, abs(w[1] - w[0]))


def reflection_fit(omega, trace, kappa_in=None, overcoupled=True, min_span=5.0):
    """Fit the reflection model to a complex or magnitude trace.

    With a complex trace, ``kappa_e`` and ``kappa_rest`` are separately
    identifiable. A magnitude trace is symmetric under swapping them, so
    ``overcoupled`` picks the root with ``kappa_e > kappa_rest``. In both
    cases only ``kappa_i + kappa_in`` is determined; passing a known
    ``kappa_in`` splits it.
    """
    w = np.asarray(omega, dtype=float)
    y = np.asarray(trace)
    is_complex = np.iscomplexobj(y)
    mag = np.abs(y)
    w0, width = _dip_guess(w, mag)
    if (w[-1] - w[0]) < min_span * width:
        raise ValueError(f"trace spans fewer than {min_span} linewidths")
    depth = 1 - mag.min()
    # |S11| at the centre is |kappa_rest - kappa_e| / (kappa_rest + kappa_e)
    r = 1 - depth
    ke0 = width * (1 + r) / 2 if overcoupled else width * (1 - r) / 2
    kr0 = max(width - ke0, 1e-3 * width)
    scale = np.array([width, width, width])
    x0 = np.array([ke0, kr0, w0]) / scale

    def residual(x):
        ke, kr, wc = x * scale
        model = reflection_model(w, ke, kr, wc)
        if is_complex:
            d = model - y
            return np.concatenate([d.real, d.imag])
        return np.abs(model) - mag

    sol = least_squares(residual, x0, method="trf", x_scale="jac",
                        bounds=([0, 0, -np.inf], [np.inf, np.inf, np.inf]),
                        ftol=1e-15, xtol=1e-15, gtol=1e-15)
    if not sol.success:
        raise ConvergenceError(f"reflection fit did not converge: {sol.message}")
    ke, kr, wc = sol.x * scale
    if not is_complex and (ke > kr) != overcoupled:
        ke, kr = kr, ke
    dof = max(len(sol.fun) - 3, 1)
    ssr = float(np.sum(sol.fun ** 2))
    try:
        cov = np.linalg.inv(sol.jac.T @ sol.jac) * ssr / dof
        sig = np.sqrt(np.abs(np.diag(cov))) * scale
    except np.linalg.LinAlgError:
        sig = np.full(3, np.nan)
    sigmas = dict(zip(("kappa_e", "kappa_rest", "omega_c"), map(float, sig)))
    kappa_i = None if kappa_in is None else kr - kappa_in
    return ReflectionFit(float(ke), float(kr), float(wc), sigmas, kappa_i, kappa_in, True)
