"""Mean-field fixed points and linear stability of the cavity-transmon-mechanics system.

In the frame of the pump, with ``alpha = x + i y`` (cavity), ``zeta = p + i q``
(transmon treated as a Kerr oscillator) and ``beta = u + i v`` (mechanics),
the flow is::

    dx/dt = -kappa_b/2 x - Delta_1 y + J q
    dy/dt = Delta_1 x - kappa_b/2 y - J p - eps
    dp/dt = -gamma/2 p + (-Delta_2 - k alpha_T (p^2 + q^2) + 2 g0 u) q + J y
    dq/dt = -gamma/2 q - (-Delta_2 - k alpha_T (p^2 + q^2) + 2 g0 u) p - J x
    du/dt = -gamma_m/2 u + omega_m v
    dv/dt = -omega_m u - gamma_m/2 v - g0 (p^2 + q^2)

with ``Delta_1 = omega_d - omega_c`` and ``Delta_2 = omega_d - omega_q``. The
Kerr coefficient ``k`` defaults to 2; ``k = 1`` is what the quartic
``-alpha_T/2 c+c+cc`` term gives on its own (see ``kerr_factor``).

Setting the flow to zero leaves a single cubic for the transmon occupation
``N = p^2 + q^2``::

    N (B^2 + C(N)^2) = eps^2 J^2 / A

which :func:`find_fixed_points` solves by a dense sign scan plus bisection.

The module also carries the reduced single-polariton flow (one Kerr mode plus
mechanics), whose stability boundary is compared with the self-energy
boundary of :mod:`fluxmech.backaction`.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError
from .spectrum import transmon_frequency

STABLE = "stable"
UNSTABLE = "unstable"
MECH_UNSTABLE = "mechanically-unstable"


@dataclass(frozen=True)
class ThreeModeParams:
    """Rates and frequencies of the three-mode model (rad/s).

    ``gamma_m`` is used both in the flow and on the mechanical diagonal of the
    Jacobian.
    """

    omega_c: float
    omega_q: float
    J: float
    alpha_T: float
    kappa_b: float
    gamma: float
    g_0: float
    omega_m: float
    gamma_m: float
    kerr_factor: float = 2.0

    def __post_init__(self):
        for key in ("kappa_b", "gamma", "omega_m"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        if self.gamma_m < 0:
            raise ValueError("gamma_m must be non-negative")

    @property
    def mech_stiffness(self):
        # (gamma_m^2 / 4 omega_m + omega_m), the static response of u to a force
        return self.gamma_m ** 2 / (4 * self.omega_m) + self.omega_m

    def with_(self, **changes):
        return replace(self, **changes)


def three_mode_params(device, flux, gamma=2 * math.pi * 12e6, g_0=2 * math.pi * 300e3,
                      kappa_b=2 * math.pi * 8e6, kerr_factor=2.0):
    """Three-mode parameters for a device at a given flux.

    Defaults are the rates used for the Device-2 stability diagram.
    """
    return ThreeModeParams(
        omega_c=device.omega_c, omega_q=float(transmon_frequency(device, flux)),
        J=device.J, alpha_T=device.alpha_T, kappa_b=kappa_b, gamma=gamma, g_0=g_0,
        omega_m=device.omega_m, gamma_m=device.gamma_m, kerr_factor=kerr_factor)


@dataclass(frozen=True)
class ThreeModeState:
    x: float
    y: float
    p: float
    q: float
    u: float
    v: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.as_array()):
            raise ValueError("state components must be finite")

    def as_array(self):
        return np.array([self.x, self.y, self.p, self.q, self.u, self.v])

    @classmethod
    def from_array(cls, z):
        return cls(*(float(c) for c in z))

    @property
    def transmon_occupation(self):
        return self.p ** 2 + self.q ** 2

    @property
    def cavity_occupation(self):
        return self.x ** 2 + self.y ** 2


@dataclass
class FixedPointReport:
    state: ThreeModeState
    eigenvalues: np.ndarray
    classification: str
    crossed: int | None
    mech_weight: float
    eig_residual: float
    flow_residual: float

    @property
    def stable(self):
        return self.classification == STABLE


def flow(z, params: ThreeModeParams, omega_d, epsilon):
    """Right-hand side f_1..f_6. ``z`` has shape ``(..., 6)``."""
    z = np.asarray(z, dtype=float)
    x, y, p, q, u, v = np.moveaxis(z, -1, 0)
    d1 = omega_d - params.omega_c
    d2 = omega_d - params.omega_q
    N = p * p + q * q
    w = -d2 - params.kerr_factor * params.alpha_T * N + 2 * params.g_0 * u
    hk, hg, hm = params.kappa_b / 2, params.gamma / 2, params.gamma_m / 2
    out = np.stack([
        -hk * x - d1 * y + params.J * q,
        d1 * x - hk * y - params.J * p - epsilon,
        -hg * p + w * q + params.J * y,
        -hg * q - w * p - params.J * x,
        -hm * u + params.omega_m * v,
        -params.omega_m * u - hm * v - params.g_0 * N,
    ])
    return np.moveaxis(out, 0, -1)


def jacobian(state, params: ThreeModeParams, omega_d, epsilon=None):
    """Stability matrix S at a state (the drive only enters through the state)."""
    z = state.as_array() if isinstance(state, ThreeModeState) else np.asarray(state, float)
    x, y, p, q, u, v = z
    d1 = omega_d - params.omega_c
    d2 = omega_d - params.omega_q
    a, g0, J, k = params.alpha_T, params.g_0, params.J, params.kerr_factor
    hk, hg, hm = params.kappa_b / 2, params.gamma / 2, params.gamma_m / 2
    return np.array([
        [-hk, -d1, 0.0, J, 0.0, 0.0],
        [d1, -hk, -J, 0.0, 0.0, 0.0],
        [0.0, J, -hg - 2 * k * a * p * q,
         -d2 - k * a * p * p - 3 * k * a * q * q + 2 * g0 * u, 2 * g0 * q, 0.0],
        [-J, 0.0, d2 + 3 * k * a * p * p + k * a * q * q - 2 * g0 * u,
         -hg + 2 * k * a * p * q, -2 * g0 * p, 0.0],
        [0.0, 0.0, 0.0, 0.0, -hm, params.omega_m],
        [0.0, 0.0, -2 * g0 * p, -2 * g0 * q, -params.omega_m, -hm],
    ])


def _reduction(params, omega_d, epsilon):
    d1 = omega_d - params.omega_c
    d2 = omega_d - params.omega_q
    A = params.kappa_b ** 2 / 4 + d1 ** 2
    B = params.gamma / 2 + params.J ** 2 * params.kappa_b / (2 * A)
    C0 = -d2 + params.J ** 2 * d1 / A
    # C(N) = C0 - slope * N, after eliminating u = -g0 N / stiffness
    slope = params.kerr_factor * params.alpha_T + 2 * params.g_0 ** 2 / params.mech_stiffness
    rhs = epsilon ** 2 * params.J ** 2 / A
    return d1, A, B, C0, slope, rhs


def occupation_residual(N, params: ThreeModeParams, omega_d, epsilon):
    """``N (B^2 + C^2) - eps^2 J^2 / A``; zero at fixed points (elementwise in N)."""
    _, _, B, C0, slope, rhs = _reduction(params, omega_d, epsilon)
    N = np.asarray(N, dtype=float)
    return N * (B ** 2 + (C0 - slope * N) ** 2) - rhs


def state_from_occupation(N, params: ThreeModeParams, omega_d, epsilon):
    """Back-substitute the remaining quadratures for a root ``N``."""
    d1, A, B, C0, slope, _ = _reduction(params, omega_d, epsilon)
    J, kb = params.J, params.kappa_b
    u = -params.g_0 * N / params.mech_stiffness
    v = params.gamma_m * u / (2 * params.omega_m)
    C = C0 - slope * N
    den = B ** 2 + C ** 2
    p = -(J * d1 * C / A + J * kb * B / (2 * A)) * epsilon / den
    q = (-J * d1 * B / A + J * kb * C / (2 * A)) * epsilon / den
    # cavity quadratures from dx/dt = dy/dt = 0
    M = np.array([[-kb / 2, -d1], [d1, -kb / 2]])
    x, y = np.linalg.solve(M, [-J * q, J * p + epsilon])
    return ThreeModeState(float(x), float(y), float(p), float(q), float(u), float(v))


def flow_scale(params: ThreeModeParams, omega_d, state):
    rates = max(params.kappa_b, params.gamma, abs(omega_d - params.omega_c),
                abs(omega_d - params.omega_q), params.J, params.omega_m)
    return rates * max(1.0, float(np.linalg.norm(state.as_array())))


def find_fixed_points(params: ThreeModeParams, omega_d, epsilon, n_scan=4001):
    """All fixed points, ordered by transmon occupation.

    The occupation is bracketed by ``0 <= N <= eps^2 J^2 / (A B^2)`` (the
    value reached when the effective detuning C vanishes), so the scan range
    follows from the parameters. Sign changes on a grid of ``n_scan`` points
    are refined by bisection; ``n_scan`` must be large enough to separate
    closely spaced roots.
    """
    if not (math.isfinite(omega_d) and math.isfinite(epsilon)):
        raise ValueError("drive frequency and amplitude must be finite")
    if epsilon == 0.0:
        return [ThreeModeState(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)]
    _, A, B, _, _, rhs = _reduction(params, omega_d, epsilon)
    if rhs == 0.0:
        # the drive cannot reach the transmon (J = 0): only the cavity responds
        return [state_from_occupation(0.0, params, omega_d, epsilon)]
    n_max = rhs / B ** 2
    grid = np.linspace(0.0, n_max, n_scan)
    values = occupation_residual(grid, params, omega_d, epsilon)
    roots = []
    for k in range(n_scan - 1):
        fa, fb = values[k], values[k + 1]
        if fb == 0.0:
            roots.append(grid[k + 1])
        elif fa * fb < 0:
            roots.append(brentq(occupation_residual, grid[k], grid[k + 1],
                                args=(params, omega_d, epsilon), xtol=1e-300, rtol=1e-15))
    if not roots:
        raise BracketError(f"no sign change of the occupation residual on [0, {n_max:.6e}]")
    return [state_from_occupation(N, params, omega_d, epsilon) for N in roots]


def classify_stability(state, params: ThreeModeParams, omega_d, epsilon, tol=None):
    """Eigenvalues of S and the resulting label.

    A state is stable iff ``max Re(lambda) < -tol`` with ``tol = 1e-9 omega_m``
    by default. An unstable state whose leading eigenvector has more than half
    its weight on ``(u, v)`` is labelled mechanically unstable.
    """
    if tol is None:
        tol = 1e-9 * params.omega_m
    S = jacobian(state, params, omega_d, epsilon)
    lam, W = np.linalg.eig(S)
    k = int(np.argmax(lam.real))
    w = W[:, k] / np.linalg.norm(W[:, k])
    mech = float(np.sum(np.abs(w[4:]) ** 2))
    eig_res = float(np.max(np.linalg.norm(S @ W - W * lam, axis=0)))
    f = flow(state.as_array(), params, omega_d, epsilon)
    f_res = float(np.linalg.norm(f) / flow_scale(params, omega_d, state))
    if lam[k].real < -tol:
        label, crossed = STABLE, None
    else:
        label = MECH_UNSTABLE if mech > 0.5 else UNSTABLE
        crossed = k
    return FixedPointReport(state, lam, label, crossed, mech, eig_res, f_res)


def analyze(params: ThreeModeParams, omega_d, epsilon, n_scan=4001, tol=None):
    return [classify_stability(s, params, omega_d, epsilon, tol)
            for s in find_fixed_points(params, omega_d, epsilon, n_scan)]


@dataclass
class RegionMap:
    """Per-point labels on an (epsilon, omega_d) grid; arrays are (n_eps, n_freq).

    ``n_fp`` is -1 where the solver failed (a hole in the map).
    """

    epsilon: np.ndarray
    omega_d: np.ndarray
    n_fp: np.ndarray
    n_stable: np.ndarray
    mech_unstable: np.ndarray
    errors: dict = field(default_factory=dict)

    def region_labels(self):
        out = np.empty(self.n_fp.shape, dtype=object)
        for idx in np.ndindex(self.n_fp.shape):
            if self.n_fp[idx] < 0:
                out[idx] = "hole"
            else:
                tag = f"{self.n_fp[idx]} FP, {self.n_stable[idx]} stable"
                out[idx] = tag + (", mech-unstable" if self.mech_unstable[idx] else "")
        return out


def region_point(params, omega_d, epsilon, n_scan=4001, tol=None):
    """``(n_fp, n_stable, mech_unstable_any)`` at one drive."""
    reports = analyze(params, omega_d, epsilon, n_scan, tol)
    n_stable = sum(r.stable for r in reports)
    mech = any(r.classification == MECH_UNSTABLE for r in reports)
    return len(reports), n_stable, mech


def region_map(params: ThreeModeParams, epsilons, omega_ds, n_scan=4001, tol=None):
    epsilons = np.asarray(epsilons, dtype=float)
    omega_ds = np.asarray(omega_ds, dtype=float)
    shape = (len(epsilons), len(omega_ds))
    n_fp = np.full(shape, -1, dtype=int)
    n_stable = np.zeros(shape, dtype=int)
    mech = np.zeros(shape, dtype=bool)
    errors = {}
    for i, eps in enumerate(epsilons):
        for j, wd in enumerate(omega_ds):
            try:
                n_fp[i, j], n_stable[i, j], mech[i, j] = region_point(params, wd, eps, n_scan, tol)
            except (BracketError, np.linalg.LinAlgError, ValueError) as exc:
                errors[(i, j)] = str(exc)
    return RegionMap(epsilons, omega_ds, n_fp, n_stable, mech, errors)


# ---------------------------------------------------------------------------
# reduced single-polariton flow (state x, y, u, v)

def reduced_flow(z, cfg, detuning, epsilon):
    """Kerr mode plus mechanics, the same model as :mod:`fluxmech.backaction`.

    ``z`` has shape ``(..., 4)``; ``detuning`` and ``epsilon`` broadcast
    against the leading axes.
    """
    z = np.asarray(z, dtype=float)
    x, y, u, v = np.moveaxis(z, -1, 0)
    N = x * x + y * y
    phi = detuning + cfg.kerr_plus * N - 2 * cfg.g_plus * u
    hk, hm = cfg.kappa / 2, cfg.gamma_m / 2
    out = np.stack([
        -hk * x - phi * y + epsilon,
        phi * x - hk * y,
        -hm * u + cfg.omega_m * v,
        -cfg.omega_m * u - hm * v - cfg.g_plus * N,
    ])
    return np.moveaxis(out, 0, -1)


def reduced_jacobian(z, cfg, detuning):
    """Jacobian of :func:`reduced_flow`, stacked over leading axes of ``z``."""
    z = np.asarray(z, dtype=float)
    x, y, u, v = np.moveaxis(z, -1, 0)
    K, g = cfg.kerr_plus, cfg.g_plus
    phi = detuning + K * (x * x + y * y) - 2 * g * u
    hk, hm = cfg.kappa / 2, cfg.gamma_m / 2
    zero = np.zeros_like(x)
    wm = np.full_like(x, cfg.omega_m)
    rows = [
        [-hk - 2 * K * x * y, -phi - 2 * K * y * y, 2 * g * y, zero],
        [phi + 2 * K * x * x, -hk + 2 * K * x * y, -2 * g * x, zero],
        [zero, zero, zero - hm, wm],
        [-2 * g * x, -2 * g * y, -wm, zero - hm],
    ]
    S = np.array([[np.broadcast_to(e, x.shape) for e in row] for row in rows])
    return np.moveaxis(S, (0, 1), (-2, -1))


def reduced_fixed_points(cfg, detuning, epsilon):
    """Fixed points of the reduced flow as ``(..., 4)`` arrays, ordered by photon number."""
    from .backaction import DriveSpec, steady_state

    drive = DriveSpec(omega_d=cfg.omega_plus + detuning, epsilon=epsilon)
    out = []
    for st in steady_state(cfg, drive):
        out.append(np.array([st.alpha.real, st.alpha.imag, st.beta.real, st.beta.imag]))
    return out


def reduced_growth_map(cfg, epsilons, detunings, branch="low"):
    """Largest real part of the reduced Jacobian spectrum on a (eps, detuning) grid.

    Uses the low (or high) photon-number branch, matching the branch choice
    of :func:`fluxmech.backaction.backaction_map`. Also returns the mechanical
    weight of the leading eigenvector.
    """
    epsilons = np.asarray(epsilons, dtype=float)
    detunings = np.asarray(detunings, dtype=float)
    Z = np.zeros((len(epsilons), len(detunings), 4))
    for i, eps in enumerate(epsilons):
        for j, det in enumerate(detunings):
            fps = reduced_fixed_points(cfg, det, eps)
            Z[i, j] = fps[0] if branch == "low" else fps[-1]
    S = reduced_jacobian(Z, cfg, detunings[None, :])
    lam, W = np.linalg.eig(S)
    k = np.argmax(lam.real, axis=-1)
    lead = np.take_along_axis(lam, k[..., None], -1)[..., 0]
    w = np.take_along_axis(W, k[..., None, None], -1)[..., 0]
    weight = np.sum(np.abs(w[..., 2:]) ** 2, axis=-1) / np.sum(np.abs(w) ** 2, axis=-1)
    return lead.real, weight, Z
