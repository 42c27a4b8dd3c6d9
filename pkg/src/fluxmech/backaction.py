"""Dynamical backaction of a single Kerr polariton mode on the mechanics.

Model, in the frame rotating at the pump::

    H = -Delta a+a - K/2 a+a+aa + omega_m b+b + g a+a (b + b+) + eps (a + a+)

with ``Delta = omega_d - omega_plus``. Positive ``K`` pulls the resonance
down as the mode fills. The mean fields obey

    d alpha/dt = (i Delta - kappa/2) alpha + i K |alpha|^2 alpha
                 - i g alpha (beta + beta*) + eps
    d beta/dt  = (-i omega_m - gamma_m/2) beta - i g |alpha|^2

and small fluctuations about a steady state feel the self-energy
``Sigma(omega)``, giving the effective mechanical damping
``Gamma_m = gamma_m + 2 Re Sigma(omega_m)`` and frequency shift
``delta omega_m = Im Sigma(omega_m)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import constants

from ._cubic import kerr_cubic_roots


@dataclass(frozen=True)
class KerrModeConfig:
    """Reduced single-mode description of the upper polariton (rad/s throughout)."""

    omega_plus: float
    kerr_plus: float
    kappa: float
    g_plus: float
    omega_m: float
    gamma_m: float
    kappa_ex: float | None = None
    kappa_0: float | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.gamma_m > 0:
            raise ValueError("gamma_m must be positive")
        if not self.omega_m > 0:
            raise ValueError("omega_m must be positive")
        if self.kerr_plus < 0:
            raise ValueError("kerr_plus must be non-negative (softening convention)")

    @property
    def static_kerr(self):
        """Effective nonlinearity of the steady state, Kerr plus static optomechanics."""
        return self.kerr_plus + 2 * self.g_plus ** 2 * self.omega_m / (
            self.omega_m ** 2 + self.gamma_m ** 2 / 4)

    def with_(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


def power_to_epsilon(power_dBm, omega_d, atten_product):
    """Drive amplitude (rad/s) from input power.

    ``eps**2 = P / (hbar * omega_d * atten_product)``: the attenuation-
    coupling product converts the photon flux at the generator into the
    mode's drive rate.
    """
    power_W = 1e-3 * 10 ** (np.asarray(power_dBm, dtype=float) / 10)
    return np.sqrt(power_W / (constants.hbar * omega_d * atten_product))


def epsilon_to_power(epsilon, omega_d, atten_product):
    power_W = np.asarray(epsilon, dtype=float) ** 2 * constants.hbar * omega_d * atten_product
    return 10 * np.log10(power_W / 1e-3)


@dataclass(frozen=True)
class DriveSpec:
    """Pump frequency and amplitude.

    Give either ``epsilon`` (rad/s) or ``power_dBm`` together with
    ``atten_product``; the amplitude is authoritative when both are set.
    """

    omega_d: float
    epsilon: float | None = None
    power_dBm: float | None = None
    atten_product: float | None = None

    def __post_init__(self):
        if self.epsilon is None:
            if self.power_dBm is None or self.atten_product is None:
                raise ValueError("give epsilon, or power_dBm with atten_product")
        elif self.epsilon < 0 or not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be finite and non-negative")

    @property
    def amplitude(self):
        if self.epsilon is not None:
            return self.epsilon
        return float(power_to_epsilon(self.power_dBm, self.omega_d, self.atten_product))

    def detuning(self, cfg):
        return self.omega_d - cfg.omega_plus


@dataclass
class SteadyState:
    """One mean-field solution: photon number, amplitudes and optical stability."""

    n: float
    alpha: complex
    beta: complex
    optically_stable: bool


@dataclass
class SelfEnergy:
    sigma: complex
    omega: float
    delta_tilde: float
    G: complex
    eta: complex
    extras: dict = field(default_factory=dict)


def _cubic_slope(n, detuning, kappa, k_eff):
    # d/dn of n ((Delta + k n)^2 + kappa^2/4); negative on the middle branch
    return (detuning + k_eff * n) ** 2 + kappa ** 2 / 4 + 2 * k_eff * n * (detuning + k_eff * n)


def amplitudes_for_n(cfg, detuning, n):
    """Mean fields for a given photon number (any n >= 0 is a steady state of some drive).

    Returns ``(alpha, beta, eps)`` with real positive drive ``eps``.
    """
    k_eff = cfg.static_kerr
    d_eff = detuning + k_eff * n
    eps = math.sqrt(n * (d_eff ** 2 + cfg.kappa ** 2 / 4))
    alpha = eps / (cfg.kappa / 2 - 1j * d_eff)
    beta = -1j * cfg.g_plus * n / (1j * cfg.omega_m + cfg.gamma_m / 2)
    return alpha, beta, eps


def steady_state(cfg: KerrModeConfig, drive: DriveSpec):
    """All steady states, sorted by photon number (1 or 3 entries)."""
    eps = drive.amplitude
    detuning = drive.detuning(cfg)
    if eps == 0.0:
        return [SteadyState(0.0, 0j, 0j, True)]
    k_eff = cfg.static_kerr
    out = []
    for n in kerr_cubic_roots(detuning, cfg.kappa / 2, eps * eps, k_eff):
        d_eff = detuning + k_eff * n
        alpha = eps / (cfg.kappa / 2 - 1j * d_eff)
        beta = -1j * cfg.g_plus * n / (1j * cfg.omega_m + cfg.gamma_m / 2)
        stable = _cubic_slope(n, detuning, cfg.kappa, k_eff) > 0
        out.append(SteadyState(float(abs(alpha) ** 2), complex(alpha), complex(beta), bool(stable)))
    return out


def sigma_from_components(omega, delta_tilde, G, eta, kappa):
    """``Sigma = 2i|G|^2 (Delta~ - |eta|) / (chi_c^-1 chi~_c^-1 - |eta|^2)``.

    Works elementwise on arrays.
    """
    chi_inv = kappa / 2 - 1j * (omega + delta_tilde)
    chi_t_inv = kappa / 2 - 1j * (omega - delta_tilde)
    abs_eta = np.abs(eta)
    return 2j * np.abs(G) ** 2 * (delta_tilde - abs_eta) / (chi_inv * chi_t_inv - abs_eta ** 2)


def self_energy(cfg: KerrModeConfig, drive: DriveSpec, branch: SteadyState, omega):
    """Backaction self-energy at frequency ``omega`` on a given steady state."""
    detuning = drive.detuning(cfg)
    a, b = branch.alpha, branch.beta
    n = abs(a) ** 2
    delta_tilde = detuning + 2 * cfg.kerr_plus * n - cfg.g_plus * 2 * b.real
    G = cfg.g_plus * a
    eta = cfg.kerr_plus * a * a
    sigma = sigma_from_components(omega, delta_tilde, G, eta, cfg.kappa)
    return SelfEnergy(complex(sigma), omega, delta_tilde, complex(G), complex(eta))


def delta_tilde_for_n(cfg, detuning, n):
    """Fluctuation detuning ``Delta + 2 K n - g (beta + beta*)`` (elementwise)."""
    static = 2 * cfg.g_plus ** 2 * cfg.omega_m / (cfg.omega_m ** 2 + cfg.gamma_m ** 2 / 4)
    return detuning + (2 * cfg.kerr_plus + static) * n


def mechanical_response_for_n(cfg, detuning, n):
    """``(Gamma_m, delta_omega_m)`` parametrized by photon number (elementwise).

    Only ``|alpha|`` enters the self-energy, so the drive amplitude is not
    needed; this is the fast path used for threshold searches.
    """
    n = np.asarray(n, dtype=float)
    dt = delta_tilde_for_n(cfg, detuning, n)
    sigma = sigma_from_components(cfg.omega_m, dt, cfg.g_plus * np.sqrt(n),
                                  cfg.kerr_plus * n, cfg.kappa)
    return cfg.gamma_m + 2 * sigma.real, sigma.imag


def select_branch(states, branch="low"):
    """Pick a steady state: ``low`` (adiabatic up-sweep), ``high``, or an index."""
    if branch == "low":
        return states[0]
    if branch == "high":
        return states[-1]
    return states[int(branch)]


@dataclass
class BackactionMap:
    """Per-point results on a (drive, detuning) grid; arrays are (n_drive, n_detuning)."""

    epsilon: np.ndarray
    detuning: np.ndarray
    n_d: np.ndarray
    Gamma_m: np.ndarray
    delta_omega_m: np.ndarray
    n_branches: np.ndarray
    stable_flag: np.ndarray


def backaction_map(cfg: KerrModeConfig, epsilons, detunings, branch="low"):
    """Effective mechanical damping and frequency shift over a drive grid.

    ``stable_flag`` is true where the chosen branch is optically stable and
    ``Gamma_m > 0``.
    """
    epsilons = np.asarray(epsilons, dtype=float)
    detunings = np.asarray(detunings, dtype=float)
    shape = (len(epsilons), len(detunings))
    n_d = np.zeros(shape)
    n_br = np.zeros(shape, dtype=int)
    optical = np.ones(shape, dtype=bool)
    k_eff = cfg.static_kerr
    for i, eps in enumerate(epsilons):
        for j, det in enumerate(detunings):
            roots = kerr_cubic_roots(det, cfg.kappa / 2, eps * eps, k_eff)
            n_br[i, j] = len(roots)
            if branch == "low":
                n = roots[0]
            elif branch == "high":
                n = roots[-1]
            else:
                n = roots[min(int(branch), len(roots) - 1)]
            n_d[i, j] = n
            optical[i, j] = _cubic_slope(n, det, cfg.kappa, k_eff) > 0
    Gm, dw = mechanical_response_for_n(cfg, detunings[None, :], n_d)
    return BackactionMap(epsilons, detunings, n_d, Gm, dw, n_br, optical & (Gm > 0))


def _lowest_n(cfg, eps, det):
    return kerr_cubic_roots(det, cfg.kappa / 2, eps * eps, cfg.static_kerr)[0]


def _growth(cfg, eps, det):
    n = _lowest_n(cfg, eps, det)
    Gm, _ = mechanical_response_for_n(cfg, det, n)
    return float(Gm)


def instability_boundary(cfg: KerrModeConfig, epsilons, detuning_range, n_scan=801,
                         tol=2 * math.pi * 1e3):
    """Detunings where ``Gamma_m`` crosses zero, for each drive amplitude.

    Scans ``n_scan`` detunings on the low-power branch, then bisects each
    sign change to ``tol`` (rad/s). Returns a list of ``(epsilon, detuning,
    n_d, direction)`` with ``direction`` = +1 when entering the unstable
    region with increasing detuning. Drives without a crossing contribute
    nothing.
    """
    lo, hi = detuning_range
    grid = np.linspace(lo, hi, n_scan)
    out = []
    for eps in np.asarray(epsilons, dtype=float):
        if eps == 0.0 or cfg.g_plus == 0.0:
            continue
        values = np.array([_growth(cfg, eps, d) for d in grid])
        sign = values > 0
        for k in np.nonzero(sign[:-1] != sign[1:])[0]:
            a, b = grid[k], grid[k + 1]
            fa = values[k]
            while b - a > tol:
                m = 0.5 * (a + b)
                fm = _growth(cfg, eps, m)
                if (fm > 0) == (fa > 0):
                    a, fa = m, fm
                else:
                    b = m
            d = 0.5 * (a + b)
            out.append((float(eps), float(d), float(_lowest_n(cfg, eps, d)),
                        1 if values[k] > 0 else -1))
    return out


def threshold_photon_number(cfg: KerrModeConfig, detuning, n_max=10.0, n_points=400):
    """Smallest optically stable photon number with ``Gamma_m <= 0`` at one detuning.

    Returns ``inf`` when no such point exists below ``n_max``.
    """
    k_eff = cfg.static_kerr
    ns = np.concatenate([[0.0], np.geomspace(1e-9, n_max, n_points)])
    Gm, _ = mechanical_response_for_n(cfg, detuning, ns)
    stable = _cubic_slope(ns, detuning, cfg.kappa, k_eff) > 0
    bad = np.nonzero((Gm <= 0) & stable)[0]
    if len(bad) == 0:
        return math.inf
    k = bad[0]
    if k == 0:
        return 0.0
    a, b = ns[k - 1], ns[k]
    if not stable[k - 1]:
        return float(b)
    for _ in range(60):
        m = 0.5 * (a + b)
        if float(mechanical_response_for_n(cfg, detuning, m)[0]) <= 0:
            b = m
        else:
            a = m
    return float(b)


def minimum_threshold(cfg: KerrModeConfig, detunings, **kw):
    """Minimum over detunings of :func:`threshold_photon_number`.

    Returns ``(n_min, detuning_at_min)``.
    """
    values = np.array([threshold_photon_number(cfg, d, **kw) for d in detunings])
    k = int(np.argmin(values))
    return float(values[k]), float(np.asarray(detunings)[k])

