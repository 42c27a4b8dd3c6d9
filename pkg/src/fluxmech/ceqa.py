"""Pump-probe absorption line shapes and electromechanical coupling fits.

Two limits of the electromagnetic mode are covered:

* a weakly anharmonic (Kerr) polariton, where the probe response ``A_-``
  follows from linearizing the mean-field equations about the pumped
  steady state;
* a strongly anharmonic mode treated as a two-level system, whose
  probe response ``sigma^-_-`` follows from the Bloch equations with a
  longitudinal mechanical coupling.

Both responses are first order in the probe amplitude. ``delta_p`` always
denotes the probe-pump offset ``omega_p - omega_d`` in rad/s.
"""

from dataclasses import dataclass, replace
import math
import warnings

import numpy as np
from scipy.optimize import least_squares

from ._cubic import kerr_cubic_roots
from .backaction import KerrModeConfig
from .errors import ConvergenceError


class ProbeValidityWarning(UserWarning):
    """The probe is not small compared with the pump."""


@dataclass(frozen=True)
class PumpProbeConfig:
    """Pump amplitude and frequency, probe amplitude (rad/s).

    ``ratio_threshold`` bounds ``epsilon_p / epsilon_d`` for the first-order
    expansion in the probe; 0.5 corresponds to a probe 6 dB below the pump.
    """

    epsilon_d: float
    omega_d: float
    epsilon_p: float
    ratio_threshold: float = 0.5

    def check(self):
        if self.epsilon_d > 0 and self.epsilon_p / self.epsilon_d > self.ratio_threshold:
            warnings.warn(
                f"probe/pump ratio {self.epsilon_p / self.epsilon_d:.3g} exceeds "
                f"{self.ratio_threshold}; the first-order probe expansion may not hold",
                ProbeValidityWarning, stacklevel=3)


@dataclass(frozen=True)
class TlsConfig:
    """Two-level description of a transmon-like mode coupled to the mechanics.

    ``gamma_phi`` is carried for bookkeeping; the probe response below uses
    the energy decay ``gamma_q`` alone.
    """

    tilde_omega_q: float
    gamma_q: float
    g_0: float
    omega_m: float
    gamma_m: float
    gamma_phi: float = 0.0

    def __post_init__(self):
        if not self.gamma_q > 0:
            raise ValueError("gamma_q must be positive")

    @staticmethod
    def dressed_frequency(omega_q, J, omega_c):
        """Cavity-pulled TLS frequency ``omega_q + J^2 / (omega_q - omega_c)``."""
        return omega_q + J * J / (omega_q - omega_c)

    def with_(self, **changes):
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# weak-Kerr limit


def weak_kerr_static_amplitude(cfg: KerrModeConfig, pp: PumpProbeConfig, branch=0):
    """Pumped steady-state amplitude of the Kerr mode.

    The static mechanical displacement ``X_0 = -2 g n / omega_m`` adds
    ``2 g^2 / omega_m`` to the Kerr shift. The pump enters as ``-i eps_d``.
    """
    detuning = pp.omega_d - cfg.omega_plus
    k_eff = cfg.kerr_plus + 2 * cfg.g_plus ** 2 / cfg.omega_m
    roots = kerr_cubic_roots(detuning, cfg.kappa / 2, pp.epsilon_d ** 2, k_eff)
    n = roots[min(branch, len(roots) - 1)]
    d_eff = detuning + k_eff * n
    return -1j * pp.epsilon_d / (cfg.kappa / 2 - 1j * d_eff)


def weak_kerr_coefficients(cfg: KerrModeConfig, pp: PumpProbeConfig, delta_p, alpha):
    """``(B1, B1', B2, B3)`` of the linearized probe equations."""
    g, K, wm = cfg.g_plus, cfg.kerr_plus, cfg.omega_m
    n = abs(alpha) ** 2
    detuning = pp.omega_d - cfg.omega_plus
    d = np.asarray(delta_p, dtype=float)
    B1 = wm ** 2 - d ** 2 - 1j * cfg.gamma_m * d
    B1p = 2 * g * g * wm / B1
    static = 2 * g * g * n / wm
    B2 = cfg.kappa / 2 - 1j * (d + detuning) - 2j * K * n - 1j * static
    B3 = cfg.kappa / 2 - 1j * (d - detuning) + 2j * K * n + 1j * static
    return B1, B1p, B2, B3


def weak_kerr_response(cfg: KerrModeConfig, pp: PumpProbeConfig, delta_grid, branch=0):
    """Intracavity probe component ``A_-(delta_p)`` of the pumped Kerr mode.

    ``A_- = -i eps_p / (B2 - i n B1' - n^2 (K + B1')^2 / (B3 + i n B1'))``
    with ``n = |alpha|^2``. Valid for any sideband ratio. The measured
    transmission is ``sqrt(kappa_e) A_- / a_in``.
    """
    pp.check()
    alpha = weak_kerr_static_amplitude(cfg, pp, branch)
    n = abs(alpha) ** 2
    _, B1p, B2, B3 = weak_kerr_coefficients(cfg, pp, delta_grid, alpha)
    K = cfg.kerr_plus
    denom = B2 - 1j * n * B1p - n * n * (K + B1p) ** 2 / (B3 + 1j * n * B1p)
    return -1j * pp.epsilon_p / denom


def weak_kerr_response_red(cfg: KerrModeConfig, n, epsilon_p, delta):
    """Closed form for a pump at ``omega_plus - omega_m`` and probe near ``omega_plus``.

    ``delta`` is the probe offset from the mode, ``omega_p - omega_plus``.
    Keeps the mechanical pole near the probe and drops terms of order
    ``delta / omega_m`` elsewhere.
    """
    g, K, wm, gm = cfg.g_plus, cfg.kerr_plus, cfg.omega_m, cfg.gamma_m
    d = np.asarray(delta, dtype=float)
    mech = gm - 2j * d
    num = (-cfg.kappa / 2 + 2j * K * n + 2j * g * g * n / wm + 1j * d
           - 2 * n * g * g / mech)
    tail = (2j * K * n + cfg.kappa / 2 - 2j * wm
            + 2 * n * g * g / wm * (1j - wm / mech))
    return 1j * epsilon_p / (num + n * n * (K + 2j * g * g / mech) ** 2 / tail)


def epsilon_for_photon_number(cfg: KerrModeConfig, detuning, n, static_kerr=None):
    """Pump amplitude that puts ``n`` photons in the Kerr mode at a given detuning."""
    k_eff = cfg.kerr_plus + 2 * cfg.g_plus ** 2 / cfg.omega_m if static_kerr is None else static_kerr
    return math.sqrt(n * ((detuning + k_eff * n) ** 2 + cfg.kappa ** 2 / 4))


# ---------------------------------------------------------------------------
# two-level limit


@dataclass
class TlsStaticState:
    sigma_z: float
    sigma_plus: complex
    sigma_minus: complex
    X0: float
    delta_tilde: float


def tls_static_state(tls: TlsConfig, pp: PumpProbeConfig, self_consistent=True,
                     tol=1e-12, max_iter=200):
    """Pumped steady state of the Bloch equations with static mechanical shift.

    ``X_0 = -g (sigma_z + 1) / omega_m`` shifts the detuning to
    ``Delta~ = Delta - g X_0``, which depends on ``sigma_z`` in turn; the
    pair is iterated to self-consistency. With ``self_consistent=False``
    the shift is dropped (``Delta~ = Delta``).
    """
    detuning = pp.omega_d - tls.tilde_omega_q
    g, eps, gq = tls.g_0, pp.epsilon_d, tls.gamma_q

    def static(dt):
        D = dt * dt + gq * gq / 4 + 2 * eps * eps
        return -2 * g * eps * eps / (tls.omega_m * D), D

    dt = detuning
    if self_consistent:
        for _ in range(max_iter):
            X0, _ = static(dt)
            new = detuning - g * X0
            if abs(new - dt) <= tol * max(abs(detuning), gq):
                dt = new
                break
            dt = new
        else:
            raise ConvergenceError("static TLS detuning did not converge")
    X0, D = static(dt)
    sz = -(dt * dt + gq * gq / 4) / D
    sp = 1j * eps * (gq / 2 - 1j * dt) / D
    sm = -1j * eps * (gq / 2 + 1j * dt) / D
    return TlsStaticState(sz, sp, sm, X0 if self_consistent else 0.0, dt)


def tls_coefficients(tls: TlsConfig, pp: PumpProbeConfig, delta_grid, state: TlsStaticState,
                     b5_flip_sign=False):
    """``B4 .. B8`` and the bracket ``F`` multiplying ``B6`` and ``B7``.

    ``b5_flip_sign`` flips the sign of the leading ``eps_d`` term of ``B5``;
    the default sign is the one that follows from the equations of motion.
    """
    g, eps, ep, gq, wm = tls.g_0, pp.epsilon_d, pp.epsilon_p, tls.gamma_q, tls.omega_m
    d = np.asarray(delta_grid, dtype=float)
    dt = state.delta_tilde
    D = dt * dt + gq * gq / 4 + 2 * eps * eps
    guard = np.abs(1j * wm + (tls.gamma_m - 1j * d) * d / wm)
    if np.any(guard == 0):
        raise ZeroDivisionError("B4 denominator vanishes: probe exactly on an undamped mechanical pole")
    B4 = -1j * g / (1j * wm + (tls.gamma_m - 1j * d) * d / wm)
    lead = 1j * eps if b5_flip_sign else -1j * eps
    B5 = (lead - B4 * eps * g * (gq / 2 - 1j * dt) / D) / (gq / 2 - 1j * (d - dt))
    common = gq - 1j * d + 2j * eps * B5
    if np.any(common == 0):
        raise ZeroDivisionError("B6/B7 denominator vanishes (gamma_q - i delta_p + 2i eps_d B5 = 0)")
    B6 = 2j * eps / common
    B7 = 2 * ep * eps / common * (gq / 2 - 1j * dt) / D
    F = 1j * eps - g * eps * B4 * (gq / 2 + 1j * dt) / D
    B8 = gq / 2 - 1j * (dt + d) - F * B6
    return {"B4": B4, "B5": B5, "B6": B6, "B7": B7, "B8": B8, "F": F}


def tls_response(tls: TlsConfig, pp: PumpProbeConfig, delta_grid, normalization=1.0,
                 self_consistent=True, exact_sigma_z0=False, b5_flip_sign=False):
    """Probe component ``sigma^-_-(delta_p)`` of the pumped two-level system.

    ``B8 sigma^-_- = F B7 + i eps_p sigma_z0`` with ``sigma_z0`` replaced by
    -1 (weak pump) unless ``exact_sigma_z0`` is set. The result is scaled
    by ``normalization``, a free factor when comparing with data.
    """
    pp.check()
    state = tls_static_state(tls, pp, self_consistent)
    B = tls_coefficients(tls, pp, delta_grid, state, b5_flip_sign)
    sz0 = state.sigma_z if exact_sigma_z0 else -1.0
    if np.any(B["B8"] == 0):
        raise ZeroDivisionError("B8 vanishes on the probe grid")
    return normalization * (B["F"] * B["B7"] + 1j * pp.epsilon_p * sz0) / B["B8"]


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitResult:
    """Best-fit parameters with one-sigma errors from the Jacobian."""

    g: float
    g_sigma: float
    params: dict
    sigmas: dict
    covariance: np.ndarray
    residual_norm: float
    nfev: int
    success: bool

    def to_dict(self):
        return {
            "g": self.g, "g_sigma": self.g_sigma,
            "params": dict(self.params), "sigmas": dict(self.sigmas),
            "residual_norm": self.residual_norm, "nfev": self.nfev,
            "success": self.success,
        }


def _model_magnitude(model, base, pp, delta, g, gamma_m, **kw):
    if model == "weak":
        cfg = base.with_(g_plus=g, gamma_m=gamma_m)
        return np.abs(weak_kerr_response(cfg, pp, delta, **kw))
    if model == "tls":
        tls = base.with_(g_0=g, gamma_m=gamma_m)
        return np.abs(tls_response(tls, pp, delta, **kw))
    raise ValueError(f"unknown model {model!r}")


def _initial_guess(model, base, pp, delta, mag):
    edge = np.median(np.concatenate([mag[: len(mag) // 10 + 1], mag[-(len(mag) // 10 + 1):]]))
    k = int(np.argmin(mag))
    depth = 1 - mag[k] / edge
    half = edge - depth * edge / 2
    below = np.nonzero(mag < half)[0]
    width = (delta[below[-1]] - delta[below[0]]) if len(below) > 1 else abs(delta[1] - delta[0])
    gamma0 = base.gamma_m
    offset = 0.0
    center = delta[k]
    # g from matching the dip depth on a coarse log grid
    g_ref = base.g_plus if model == "weak" else base.g_0
    best, g0 = np.inf, g_ref
    for factor in np.geomspace(0.05, 20, 41):
        trial = g_ref * factor
        m = _model_magnitude(model, base, pp, np.array([center, delta[0], delta[-1]]), trial, gamma0)
        d = 1 - m[0] / (0.5 * (m[1] + m[2]))
        if abs(d - depth) < best:
            best, g0 = abs(d - depth), trial
    ref = _model_magnitude(model, base, pp, np.array([delta[0], delta[-1]]), g0, gamma0)
    amp0 = edge / np.mean(ref)
    return g0, gamma0, offset, amp0, width


def fit_g(delta, magnitude, model, base, pp, init=None, fit_background=False,
          noise="additive", max_nfev=2000, **model_kw):
    """Least-squares fit of an absorption dip for the coupling rate.

    Parameters
    ----------
    delta : array
        Probe offsets ``omega_p - omega_d`` (rad/s), at least 30 points.
    magnitude : array
        Measured |S21| (or |A_-|), any linear scale.
    model : {"weak", "tls"}
        Line-shape model; ``base`` is the matching :class:`KerrModeConfig`
        or :class:`TlsConfig` supplying every parameter that is held fixed.
    pp : PumpProbeConfig
    init : dict, optional
        Starting values for ``g``, ``gamma_m``, ``offset``, ``amplitude``
        (and ``background``). Missing entries come from dip heuristics.
    fit_background : bool
        Also fit an additive background. Over a window narrow compared
        with the electromagnetic linewidth the background and amplitude
        are nearly degenerate, so this is off by default.
    noise : {"additive", "multiplicative"}
        Noise model used to weight residuals. Multiplicative noise is
        weighted by ``1 / |magnitude|`` so the reported covariance matches
        the scatter of repeated fits.

    Returns
    -------
    FitResult
        ``covariance`` is ``(J^T J)^-1 * SSR / (N - p)`` in parameter order
        g, gamma_m, offset, amplitude[, background].
    """
    if model not in ("weak", "tls"):
        raise ValueError(f"unknown model {model!r}")
    delta = np.asarray(delta, dtype=float)
    mag = np.asarray(magnitude, dtype=float)
    if delta.shape != mag.shape or delta.ndim != 1:
        raise ValueError("delta and magnitude must be 1D arrays of equal length")
    if len(delta) < 30:
        raise ValueError("at least 30 samples spanning the dip are required")

    g0, gm0, off0, amp0, _ = _initial_guess(model, base, pp, delta, mag)
    init = dict(init or {})
    start = [init.get("g", g0), init.get("gamma_m", gm0), init.get("offset", off0),
             init.get("amplitude", amp0)]
    names = ["g", "gamma_m", "offset", "amplitude"]
    if fit_background:
        start.append(init.get("background", 0.0))
        names.append("background")
    start = np.array(start, dtype=float)
    # work in scaled coordinates so every parameter is of order one
    scale = np.array([abs(start[0]) or 1.0, abs(start[1]) or 1.0, abs(start[1]) or 1.0,
                      abs(start[3]) or 1.0] + ([abs(start[3]) or 1.0] if fit_background else []))
    if noise == "additive":
        level = np.median(np.abs(mag)) or 1.0
    elif noise == "multiplicative":
        if np.any(mag <= 0):
            raise ValueError("multiplicative weighting needs strictly positive magnitudes")
        level = np.abs(mag)
    else:
        raise ValueError(f"unknown noise model {noise!r}")

    def predict(q):
        p = q * scale
        m = p[3] * _model_magnitude(model, base, pp, delta - p[2], abs(p[0]), abs(p[1]), **model_kw)
        if fit_background:
            m = m + p[4]
        return m

    def residual(q):
        return (predict(q) - mag) / level

    sol = least_squares(residual, start / scale, method="trf", max_nfev=max_nfev,
                        x_scale="jac", ftol=1e-15, xtol=1e-15, gtol=1e-15)
    if not sol.success:
        raise ConvergenceError(f"fit did not converge: {sol.message}")
    p = sol.x * scale
    p[0], p[1] = abs(p[0]), abs(p[1])
    J = sol.jac
    dof = max(len(mag) - len(p), 1)
    ssr = float(np.sum(sol.fun ** 2))
    try:
        cov_scaled = np.linalg.inv(J.T @ J) * ssr / dof
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("singular Jacobian at the fit optimum") from exc
    cov = cov_scaled * np.outer(scale, scale)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    params = dict(zip(names, p.tolist()))
    sigmas = dict(zip(names, sig.tolist()))
    return FitResult(g=params["g"], g_sigma=sigmas["g"], params=params, sigmas=sigmas,
                     covariance=cov, residual_norm=float(np.linalg.norm(sol.fun * level)),
                     nfev=sol.nfev, success=bool(sol.success))


def aggregate_fits(results):
    """Inverse-variance mean of several coupling fits, with its standard error."""
    g = np.array([r.g for r in results])
    s = np.array([r.g_sigma for r in results])
    w = 1 / s ** 2
    mean = float(np.sum(w * g) / np.sum(w))
    return mean, float(1 / math.sqrt(np.sum(w)))
