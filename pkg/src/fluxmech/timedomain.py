"""Direct integration of the mean-field equations, output spectra and comb detection.

Everything runs in the frame rotating at the pump, so a spectrum computed
from the cavity amplitude is centred on the pump: a frequency comb shows up
as peaks at ``k * omega_m / 2 pi`` around zero. Add ``omega_d / 2 pi`` to
label lab frequencies.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.signal import find_peaks, get_window, welch

from .errors import IntegrationBlowup
from .semiclassical import flow, reduced_fixed_points, reduced_flow

MODELS = ("kerr", "three_mode")


@dataclass(frozen=True)
class IntegrationConfig:
    """Integrator settings.

    ``sample_rate`` is in Hz and sets the spacing of the returned series; the
    step size itself is chosen by the embedded error controller.
    """

    model: str = "kerr"
    t_end: float = 1e-4
    rtol: float = 1e-9
    atol: float = 1e-12
    sample_rate: float = 200e6
    method: str = "DOP853"
    blowup: float = 1e8

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if not (self.t_end > 0 and self.sample_rate > 0):
            raise ValueError("t_end and sample_rate must be positive")
        if not (0 < self.rtol < 1 and self.atol > 0):
            raise ValueError("tolerances must be positive")

    def check_psd_run(self, omega_m, highest_sideband=3):
        """Raise unless the run is long and finely sampled enough for a comb PSD."""
        f_m = omega_m / (2 * math.pi)
        if self.t_end * f_m < 200:
            raise ValueError("PSD runs need at least 200 mechanical periods")
        if self.sample_rate < 8 * highest_sideband * f_m:
            raise ValueError("sample rate below 8x the highest retained sideband")


@dataclass
class TimeSeries:
    t: np.ndarray
    modes: dict

    def to_columns(self):
        cols = {"t": self.t}
        for name, z in self.modes.items():
            cols[f"re_{name}"] = z.real
            cols[f"im_{name}"] = z.imag
        return cols


@dataclass
class PsdResult:
    freq: np.ndarray
    psd: np.ndarray
    peaks: list = field(default_factory=list)
    comb_detected: bool = False
    comb_spacing: float = float("nan")
    df: float = float("nan")
    enbw: float = float("nan")

    def peak_power(self, index):
        """Tone power from the density at bin ``index`` (exact for bin-centred tones)."""
        return float(self.psd[index] * self.enbw)


def _real_state(model, y0):
    y0 = np.asarray(y0)
    if np.iscomplexobj(y0):
        return np.column_stack([y0.real, y0.imag]).ravel()
    n = 4 if model == "kerr" else 6
    if y0.shape[-1] != n:
        raise ValueError(f"{model} model needs {n // 2} complex or {n} real initial values")
    return y0.astype(float)


def integrate(cfg: IntegrationConfig, params, omega_d, epsilon, y0):
    """Integrate one trajectory.

    ``params`` is a :class:`~fluxmech.backaction.KerrModeConfig` for the
    ``kerr`` model (``omega_d`` is then the absolute pump frequency) or a
    :class:`~fluxmech.semiclassical.ThreeModeParams` for ``three_mode``.
    ``y0`` holds complex mode amplitudes, ``(alpha, beta)`` or
    ``(alpha, zeta, beta)``.

    Raises :class:`IntegrationBlowup` with the failure time when the step
    size underflows or an amplitude exceeds ``cfg.blowup``.
    """
    z0 = _real_state(cfg.model, y0)
    if cfg.model == "kerr":
        detuning = omega_d - params.omega_plus

        def rhs(t, z):
            return reduced_flow(z, params, detuning, epsilon)
    else:
        def rhs(t, z):
            return flow(z, params, omega_d, epsilon)

    def escape(t, z):
        return cfg.blowup - np.max(np.abs(z))
    escape.terminal = True

    n_samples = int(math.floor(cfg.t_end * cfg.sample_rate)) + 1
    t_eval = np.arange(n_samples) / cfg.sample_rate
    sol = solve_ivp(rhs, (0.0, t_eval[-1]), z0, method=cfg.method, t_eval=t_eval,
                    rtol=cfg.rtol, atol=cfg.atol, events=escape)
    if sol.status == -1:
        raise IntegrationBlowup(f"integration failed: {sol.message}", float(sol.t[-1]) if sol.t.size else 0.0)
    if sol.status == 1:
        raise IntegrationBlowup("amplitude exceeded the blow-up bound", float(sol.t_events[0][0]))
    z = sol.y[0::2] + 1j * sol.y[1::2]
    names = ("alpha", "beta") if cfg.model == "kerr" else ("alpha", "zeta", "beta")
    return TimeSeries(sol.t, dict(zip(names, z)))


def psd(signal, sample_rate, discard=0.3, resolution=None, window="hann", detrend="constant"):
    """Two-sided Welch spectrum of a complex (or real) signal.

    The first ``discard`` fraction of the record is dropped as transient.
    With ``detrend=False`` the mean (the pump carrier in the rotating frame)
    is kept as a peak at zero frequency.
    ``resolution`` (Hz) sets the segment length; by default the record is
    split into eight segments. Frequencies are returned in increasing order.
    """
    x = np.asarray(signal)
    x = x[int(discard * len(x)):]
    if resolution is None:
        nperseg = max(len(x) // 8, 16)
    else:
        nperseg = int(round(sample_rate / resolution))
    if nperseg > len(x):
        raise ValueError("record too short for the requested resolution")
    f, p = welch(x, fs=sample_rate, window=window, nperseg=nperseg,
                 return_onesided=False, detrend=detrend, scaling="density")
    order = np.argsort(f)
    w = get_window(window, nperseg)
    df = sample_rate / nperseg
    enbw = sample_rate * np.sum(w ** 2) / np.sum(w) ** 2
    result = PsdResult(f[order], p[order], df=df, enbw=enbw)
    result.peaks = detect_peaks(result)
    return result


def detect_peaks(res: PsdResult, prominence_decades=1.0, rel_floor=1e-12):
    """Local maxima standing ``prominence_decades`` above their surroundings in log power.

    Working in log power makes detection independent of overall scaling.
    Returns a list of ``(freq, power)``.
    """
    p = np.maximum(res.psd, rel_floor * res.psd.max() if res.psd.max() > 0 else 1e-300)
    logp = np.log10(p)
    idx, _ = find_peaks(logp, prominence=prominence_decades)
    return [(float(res.freq[i]), res.peak_power(i)) for i in idx]


def noise_floor(res: PsdResult, rel_floor=1e-6):
    """Median density, but never below ``rel_floor`` times the strongest bin.

    Noise-free simulations have a floor set by round-off and window leakage;
    the relative floor stands in for a finite instrument dynamic range.
    """
    return max(float(np.median(res.psd)), rel_floor * float(res.psd.max()))


def comb_detect(res: PsdResult, omega_m, center=0.0, tol=0.05, floor_factor=10.0,
                rel_floor=1e-6):
    """Comb test: at least three peaks on a grid ``center + k s`` with
    ``s`` within ``tol`` of ``omega_m / 2 pi``, and power at ``center +- 2 s``
    more than ``floor_factor`` above the noise floor.

    Returns ``(detected, spacing_Hz)``; the spacing is NaN when no candidate
    spacing was found. The result is also stored on ``res``.
    """
    f_m = omega_m / (2 * math.pi)
    peaks = np.array([f for f, _ in res.peaks]) if res.peaks else np.zeros(0)
    detected, spacing = False, float("nan")
    near = peaks[np.abs(np.abs(peaks - center) - f_m) < tol * f_m]
    if near.size:
        s = float(np.abs(near - center)[np.argmin(np.abs(np.abs(near - center) - f_m))])
        match_tol = max(2 * res.df, 0.01 * s)
        ks, fs = [], []
        for k in range(-4, 5):
            target = center + k * s
            d = np.abs(peaks - target)
            if d.size and d.min() < match_tol:
                ks.append(k)
                fs.append(peaks[np.argmin(d)])
        ks, fs = np.array(ks, float), np.array(fs)
        nz = ks != 0
        if nz.sum() >= 1:
            s = float(np.sum(ks[nz] * (fs[nz] - center)) / np.sum(ks[nz] ** 2))
        spacing = s
        floor = noise_floor(res, rel_floor)
        side = [np.interp(center + sgn * 2 * s, res.freq, res.psd) for sgn in (-1, 1)]
        # local maximum within a couple of bins of the expected sideband
        side = [res.psd[np.abs(res.freq - (center + sgn * 2 * s)) <= 2 * res.df].max(initial=v)
                for sgn, v in zip((-1, 1), side)]
        strong = max(side) > floor_factor * floor
        detected = bool(len(ks) >= 3 and abs(s - f_m) <= tol * f_m and strong)
    res.comb_detected, res.comb_spacing = detected, spacing
    return detected, spacing


# ---------------------------------------------------------------------------
# batched trajectories for stability maps

def accelerate(cfg, factor):
    """Scale ``g -> factor g`` and ``gamma_m -> factor^2 gamma_m``.

    Optical damping scales as ``g^2``, so the ratio of optical to intrinsic
    damping, and with it the ``Gamma_m = 0`` boundary, is unchanged apart from
    the small static Kerr term ``2 g^2 / omega_m``. Growth rates speed up by
    ``factor^2``, which brings the time needed to see them within reach.
    """
    return cfg.with_(g_plus=cfg.g_plus * factor, gamma_m=cfg.gamma_m * factor ** 2)


def growth_rate_map(cfg, epsilons, detunings, periods=400, kick=1e-3, rtol=1e-8,
                    atol=1e-11, windows=20, branch="low", floor=1e-7):
    """Amplitude growth rate of a mechanical kick, from the nonlinear reduced flow.

    Every grid point starts on its fixed point with the mechanics displaced by
    ``kick``. All points are integrated together as one system. The rate is
    the slope of log RMS deviation, taken per mechanical period over the
    second half of the run, skipping windows whose RMS fell below
    ``floor * kick``; a point with fewer than two usable windows gets rate
    ``-inf``. Returns ``(rate, amplitude_ratio)``, each of shape
    ``(n_eps, n_det)``. Unstable points have positive rate.
    """
    epsilons = np.asarray(epsilons, dtype=float)
    detunings = np.asarray(detunings, dtype=float)
    E, D = np.meshgrid(epsilons, detunings, indexing="ij")
    Z0 = np.zeros(E.shape + (4,))
    for idx in np.ndindex(E.shape):
        fps = reduced_fixed_points(cfg, D[idx], E[idx])
        Z0[idx] = fps[0] if branch == "low" else fps[-1]
    start = Z0.copy()
    start[..., 2] += kick
    shape = Z0.shape
    e_flat, d_flat = E.ravel(), D.ravel()

    def rhs(t, z):
        return reduced_flow(z.reshape(-1, 4), cfg, d_flat, e_flat).ravel()

    period = 2 * math.pi / cfg.omega_m
    t_end = periods * period
    starts = np.linspace(0.5 * t_end, t_end - period, windows)
    t_eval = np.concatenate([s + np.linspace(0, period, 16, endpoint=False) for s in starts])
    sol = solve_ivp(rhs, (0.0, t_end), start.ravel(), method="DOP853", t_eval=t_eval,
                    rtol=rtol, atol=atol)
    if sol.status != 0:
        raise IntegrationBlowup(f"integration failed: {sol.message}", float(sol.t[-1]))
    Y = sol.y.reshape(shape + (len(t_eval),))
    dev = Y[..., 2:, :] - Z0[..., 2:, None]
    amp2 = np.sum(dev ** 2, axis=-2).reshape(E.shape + (windows, 16))
    rms = np.sqrt(amp2.mean(axis=-1))
    tc = starts + period / 2
    # windows that decayed into round-off carry no information about the rate
    ok = rms > floor * kick
    logr = np.log(np.maximum(rms, 1e-300))
    cnt = ok.sum(axis=-1)
    safe = np.maximum(cnt, 1)
    tbar = np.sum(tc * ok, axis=-1) / safe
    tm = (tc - tbar[..., None]) * ok
    var = np.sum(tm ** 2, axis=-1)
    rate = np.where(cnt >= 2, np.sum(logr * tm, axis=-1) / np.where(var > 0, var, 1.0), -np.inf)
    return rate, rms[..., -1] / kick


def boundary_agreement(reference, other):
    """Check two boolean stability maps differ only next to the reference boundary.

    Returns ``(ok, n_mismatch, n_far)`` where ``n_far`` counts mismatched cells
    with no neighbour (8-connected) of opposite reference label, i.e.
    disagreements more than one grid step from the boundary.
    """
    ref = np.asarray(reference, dtype=bool)
    oth = np.asarray(other, dtype=bool)
    mism = ref != oth
    padded = np.pad(ref, 1, mode="edge")
    near = np.zeros_like(ref)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            shifted = padded[1 + di:1 + di + ref.shape[0], 1 + dj:1 + dj + ref.shape[1]]
            near |= shifted != ref
    n_far = int(np.sum(mism & ~near))
    return n_far == 0, int(mism.sum()), n_far


def stationarity_ratio(signal, discard=0.3):
    """Fluctuation power of the last quarter over that of the quarter before.

    Close to 1 for a limit cycle or a fixed point with no fluctuations left.
    A ring-down gives a ratio well below 1 and non-saturating growth gives
    one well above 1.
    """
    x = np.asarray(signal)
    x = x[int(discard * len(x)):]
    q = len(x) // 4
    a, b = x[-2 * q:-q], x[-q:]
    va, vb = np.var(a), np.var(b)
    if va == 0.0:
        return 1.0 if vb == 0.0 else math.inf
    return float(vb / va)


@dataclass
class CombRun:
    series: TimeSeries
    spectrum: PsdResult
    detected: bool
    spacing: float
    stationarity: float
    status: str


def comb_run(cfg, detuning, epsilon, periods=600, n_thermal=365.0, sample_rate=None,
             resolution=None, kappa_e=None, stationary_band=(0.5, 2.0), **detect_kw):
    """Integrate the Kerr-mode model from a thermally displaced fixed point and test for a comb.

    The mechanics starts displaced by ``sqrt(n_thermal)`` from the low-branch
    fixed point. The output proxy is ``sqrt(kappa_e) alpha`` (``kappa_e``
    defaults to ``kappa / 2``). ``status`` is ``"limit-cycle"`` for a
    stationary comb, ``"ring-down"`` or ``"growing"`` when the tail is not
    stationary, and ``"steady"`` otherwise.
    """
    f_m = cfg.omega_m / (2 * math.pi)
    if sample_rate is None:
        sample_rate = 32 * f_m
    if resolution is None:
        resolution = f_m / 80
    ic = IntegrationConfig(model="kerr", t_end=periods / f_m, sample_rate=sample_rate,
                           rtol=1e-8, atol=1e-10)
    ic.check_psd_run(cfg.omega_m)
    z = reduced_fixed_points(cfg, detuning, epsilon)[0]
    y0 = np.array([z[0] + 1j * z[1], z[2] + 1j * z[3] + math.sqrt(n_thermal)])
    ts = integrate(ic, cfg, cfg.omega_plus + detuning, epsilon, y0)
    ke = cfg.kappa / 2 if kappa_e is None else kappa_e
    out = math.sqrt(ke) * ts.modes["alpha"]
    spec = psd(out, sample_rate, resolution=resolution, detrend=False)
    found, spacing = comb_detect(spec, cfg.omega_m, **detect_kw)
    ratio = stationarity_ratio(ts.modes["beta"])
    lo, hi = stationary_band
    if ratio < lo:
        status = "ring-down"
    elif ratio > hi:
        status = "growing"
    else:
        status = "limit-cycle" if found else "steady"
    detected = found and status == "limit-cycle"
    spec.comb_detected = detected
    return CombRun(ts, spec, detected, spacing, ratio, status)
