"""Low-power instability map from independent two-level transitions.

Each single-photon transition of the transmon-cavity ladder is treated as a
two-level system (TLS) longitudinally coupled to the mechanics::

    H = -Delta_i sz/2 + omega_m b+b + (g_i/2)(sz + 1)(b + b+) + eps_i (s+ + s-)

with ``Delta_i = omega_d - omega_i``. Writing ``<sz> = s``,
``<s+> = p + i q`` and ``<b> = u + i v`` the mean-field flow is::

    ds/dt = 4 eps q - gamma (s + 1)
    dp/dt = -G2 p - W q
    dq/dt = -G2 q + W p - eps s
    du/dt = -gamma_m/2 u + omega_m v
    dv/dt = -omega_m u - gamma_m/2 v - (g/2)(s + 1)

where ``G2 = gamma/2 + gamma_phi`` and ``W = -Delta + 2 g u``. Fixed points
solve a cubic in ``w = s + 1`` whose real roots all lie in ``(0, 1)``.

Thermal occupation of a transition's lower state scales its drive amplitude
as ``eps_i = sqrt(weight) * eps``.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from ._cubic import real_cubic_roots
from .spectrum import STATE_LABELS, TRANSITIONS

TWO_PI = 2 * math.pi

DEFAULT_LABELS = ("minus", "plus", "minus_alpha", "minus_beta")
DEFAULT_GAMMA = {"minus": TWO_PI * 10e6, "plus": TWO_PI * 10e6,
                 "minus_alpha": TWO_PI * 18e6, "minus_beta": TWO_PI * 14e6}
DEFAULT_GAMMA_PHI = {"minus": TWO_PI * 4e6, "plus": TWO_PI * 4e6,
                     "minus_alpha": TWO_PI * 8e6, "minus_beta": TWO_PI * 9e6}
DEFAULT_WEIGHTS = {"g": 0.82, "-": 0.10, "+": 0.08}


@dataclass(frozen=True)
class TransitionTls:
    """One transition as a TLS (rates in rad/s).

    ``thermal_weight`` is the occupation of the transition's lower state.
    """

    label: str
    omega_i: float
    g_i: float
    gamma_i: float
    gamma_phi_i: float
    thermal_weight: float
    omega_m: float
    gamma_m: float

    def __post_init__(self):
        if not self.gamma_i > 0:
            raise ValueError("gamma_i must be positive")
        if self.gamma_phi_i < 0:
            raise ValueError("gamma_phi_i must be non-negative")
        if not 0 <= self.thermal_weight <= 1:
            raise ValueError("thermal_weight must lie in [0, 1]")

    @property
    def transverse_rate(self):
        return self.gamma_i / 2 + self.gamma_phi_i

    @property
    def mech_stiffness(self):
        return self.gamma_m ** 2 / (4 * self.omega_m) + self.omega_m

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class TlsFixedPoint:
    s: float
    p: float
    q: float
    u: float
    v: float

    def as_array(self):
        return np.array([self.s, self.p, self.q, self.u, self.v])


def enumerate_transitions(spectrum, omega_m, gamma_m, weights=None, gammas=None,
                          gamma_phis=None, labels=DEFAULT_LABELS, g_plus_ref=None):
    """Build the modelled TLS list from a :class:`~fluxmech.spectrum.PolaritonSpectrum`.

    Couplings come from ``spectrum.couplings``. When ``g_plus_ref`` is given,
    all couplings are rescaled by a common factor so that the upper-polariton
    coupling has magnitude ``g_plus_ref``; the ratios between transitions
    (set by their flux responsivities) are kept.
    """
    weights = dict(DEFAULT_WEIGHTS if weights is None else weights)
    if sum(weights.values()) > 1 + 1e-12:
        raise ValueError("thermal weights sum to more than one")
    gammas = dict(DEFAULT_GAMMA, **(gammas or {}))
    gamma_phis = dict(DEFAULT_GAMMA_PHI, **(gamma_phis or {}))
    couplings = {k: spectrum.couplings.get(k, 0.0) for k in labels}
    if g_plus_ref is not None:
        ref = spectrum.couplings.get("plus", 0.0)
        if ref == 0.0:
            raise ValueError("cannot rescale: upper-polariton coupling is zero")
        factor = abs(g_plus_ref) / abs(ref)
        couplings = {k: v * factor for k, v in couplings.items()}
    out = []
    for label in labels:
        _, lower, _ = TRANSITIONS[label]
        out.append(TransitionTls(
            label=label, omega_i=spectrum.frequency(label), g_i=couplings[label],
            gamma_i=gammas[label], gamma_phi_i=gamma_phis[label],
            thermal_weight=weights.get(STATE_LABELS[lower], 0.0), omega_m=omega_m, gamma_m=gamma_m))
    return out


def drive_amplitude(tls: TransitionTls, epsilon):
    return math.sqrt(tls.thermal_weight) * epsilon


def tls_flow(z, tls: TransitionTls, omega_d, epsilon_i):
    """Flow for ``z = (s, p, q, u, v)`` with shape ``(..., 5)``; ``epsilon_i`` is the scaled drive."""
    z = np.asarray(z, dtype=float)
    s, p, q, u, v = np.moveaxis(z, -1, 0)
    delta = omega_d - tls.omega_i
    g = tls.g_i
    W = -delta + 2 * g * u
    G2 = tls.transverse_rate
    hm = tls.gamma_m / 2
    out = np.stack([
        4 * epsilon_i * q - tls.gamma_i * (s + 1),
        -G2 * p - W * q,
        -G2 * q + W * p - epsilon_i * s,
        -hm * u + tls.omega_m * v,
        -tls.omega_m * u - hm * v - 0.5 * g * (s + 1),
    ])
    return np.moveaxis(out, 0, -1)


def tls_fixed_points(tls: TransitionTls, omega_d, epsilon_i):
    """Fixed points ordered by excitation ``s``; ``epsilon_i`` is the scaled drive.

    Solves ``gamma w (G2^2 + (Delta + g^2 w / M)^2) + 4 eps^2 G2 (w - 1) = 0``
    for ``w = s + 1`` (``M`` is the mechanical stiffness) and back-substitutes.
    """
    if epsilon_i == 0.0:
        return [TlsFixedPoint(-1.0, 0.0, 0.0, 0.0, 0.0)]
    delta = omega_d - tls.omega_i
    if not math.isfinite(delta):
        raise ValueError("detuning must be finite")
    g, M, G2, gam = tls.g_i, tls.mech_stiffness, tls.transverse_rate, tls.gamma_i
    c = g * g / M
    e2 = epsilon_i * epsilon_i
    # gamma w (G2^2 + delta^2 + 2 delta c w + c^2 w^2) + 4 e2 G2 w - 4 e2 G2
    coeffs = (gam * c * c, 2 * gam * delta * c, gam * (G2 * G2 + delta * delta) + 4 * e2 * G2,
              -4 * e2 * G2)
    if coeffs[0] == 0.0:
        ws = [-coeffs[3] / coeffs[2]]
    else:
        ws = real_cubic_roots(*coeffs)
    out = []
    for w in sorted(ws):
        if not -1e-12 <= w <= 1 + 1e-12:
            raise ValueError(f"fixed point outside the physical range: s = {w - 1:.6g}")
        s = w - 1.0
        u = -0.5 * g * w / M
        v = tls.gamma_m * u / (2 * tls.omega_m)
        q = gam * w / (4 * epsilon_i)
        W = -delta + 2 * g * u
        p = -q * W / G2
        out.append(TlsFixedPoint(s, p, q, u, v))
    return out


def tls_jacobian(tls: TransitionTls, fp: TlsFixedPoint, omega_d, epsilon_i):
    """Stability matrix of the TLS flow at a fixed point."""
    delta = omega_d - tls.omega_i
    g, G2 = tls.g_i, tls.transverse_rate
    W = -delta + 2 * g * fp.u
    hm = tls.gamma_m / 2
    return np.array([
        [-tls.gamma_i, 0.0, 4 * epsilon_i, 0.0, 0.0],
        [0.0, -G2, -W, -2 * g * fp.q, 0.0],
        [-epsilon_i, W, -G2, 2 * g * fp.p, 0.0],
        [0.0, 0.0, 0.0, -hm, tls.omega_m],
        [-0.5 * g, 0.0, 0.0, -tls.omega_m, -hm],
    ])


def tls_stability(tls: TransitionTls, fp: TlsFixedPoint, omega_d, epsilon_i):
    """Eigenvalues of the stability matrix."""
    return np.linalg.eigvals(tls_jacobian(tls, fp, omega_d, epsilon_i))


def tls_unstable(tls, omega_d, epsilon, tol=None, branch="low"):
    """Whether the TLS driven at total amplitude ``epsilon`` is unstable.

    The drive is scaled by the thermal weight here. ``branch`` picks the
    fixed point: ``low`` (least excited, the state reached by raising the
    power) or ``any`` (unstable if any fixed point is).
    """
    if tol is None:
        tol = 1e-9 * tls.omega_m
    eps_i = drive_amplitude(tls, epsilon)
    fps = tls_fixed_points(tls, omega_d, eps_i)
    if branch == "low":
        fps = fps[:1]
    return any(np.max(tls_stability(tls, fp, omega_d, eps_i).real) > tol for fp in fps)


@dataclass
class UnionMap:
    """Instability over an (epsilon, omega_d) grid; arrays are (n_eps, n_freq).

    ``attribution`` is a bitmask: bit ``k`` is set when transition ``k`` is
    unstable. ``holes`` marks points where a transition failed to solve.
    """

    epsilon: np.ndarray
    omega_d: np.ndarray
    labels: tuple
    attribution: np.ndarray
    holes: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def unstable(self):
        return self.attribution > 0

    def transition_mask(self, label):
        return (self.attribution >> self.labels.index(label)) & 1 == 1


def union_instability_map(transitions, epsilons, omega_ds, branch="low", tol=None):
    epsilons = np.asarray(epsilons, dtype=float)
    omega_ds = np.asarray(omega_ds, dtype=float)
    shape = (len(epsilons), len(omega_ds))
    bits = np.zeros(shape, dtype=np.int64)
    holes = np.zeros(shape, dtype=bool)
    errors = {}
    for k, tls in enumerate(transitions):
        if tls.thermal_weight == 0.0:
            continue
        for i, eps in enumerate(epsilons):
            for j, wd in enumerate(omega_ds):
                try:
                    if tls_unstable(tls, wd, eps, tol, branch):
                        bits[i, j] |= 1 << k
                except (ValueError, np.linalg.LinAlgError) as exc:
                    holes[i, j] = True
                    errors[(tls.label, i, j)] = str(exc)
    return UnionMap(epsilons, omega_ds, tuple(t.label for t in transitions), bits, holes, errors)


def count_lobes(mask):
    """Number of 8-connected unstable regions in a boolean map."""
    from scipy import ndimage

    _, n = ndimage.label(np.asarray(mask, dtype=bool), structure=np.ones((3, 3)))
    return int(n)


def lobe_onsets(umap: UnionMap):
    """Smallest drive amplitude at which each transition is unstable anywhere (inf if never)."""
    out = {}
    for label in umap.labels:
        rows = np.nonzero(umap.transition_mask(label).any(axis=1))[0]
        out[label] = float(umap.epsilon[rows[0]]) if rows.size else math.inf
    return out
