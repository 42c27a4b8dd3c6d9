"""Transmon-cavity polariton spectrum up to two excitations.

Basis ordering of the 6x6 Hamiltonian (cavity photons, transmon quanta)::

    0: |0,0>   1: |0,1>   2: |1,0>   3: |0,2>   4: |1,1>   5: |2,0>

The Hamiltonian conserves excitation number, so it is block diagonal with
blocks {0}, {1, 2} and {3, 4, 5}. Eigenstates are named |g>, |->, |+> in the
first two blocks and |alpha>, |beta>, |gamma> (ascending) in the third.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import constants

from .device import as_flux
from .errors import FluxSingularityError

BLOCKS = ((0,), (1, 2), (3, 4, 5))
STATE_LABELS = ("g", "-", "+", "alpha", "beta", "gamma")

# transition label -> (upper state index, lower state index, photon number)
TRANSITIONS = {
    "minus": (1, 0, 1),
    "plus": (2, 0, 1),
    "minus_alpha": (3, 1, 1),
    "minus_beta": (4, 1, 1),
    "plus_gamma": (5, 2, 1),
    "gamma_half": (5, 0, 2),
}
# numbering used by the two-level instability model
NUMBERED = {1: "minus", 2: "plus", 3: "minus_alpha", 4: "minus_beta"}


def transmon_frequency(params, flux):
    """Symmetric-SQUID transmon frequency at the given flux bias.

    ``(omega_q_max + alpha_T) * sqrt(|cos(pi Phi / Phi_0)|) - alpha_T``. At
    half a flux quantum this returns ``-alpha_T``; callers treat that as
    "tuned far below the band".
    """
    phi = as_flux(flux).phi_ratio
    return (params.omega_q_max + params.alpha_T) * math.sqrt(abs(math.cos(math.pi * phi))) \
        - params.alpha_T


def transmon_frequency_slope(params, flux):
    """d omega_q / d(Phi / Phi_0), analytic; diverges at half flux."""
    phi = as_flux(flux).phi_ratio
    c = math.cos(math.pi * phi)
    if c == 0.0:
        return -math.inf
    return -(params.omega_q_max + params.alpha_T) * math.pi * math.sin(math.pi * phi) \
        * math.copysign(1.0, c) / (2 * math.sqrt(abs(c)))


def flux_for_transmon_frequency(params, omega_q):
    """Inverse of :func:`transmon_frequency` on the branch 0 <= Phi/Phi_0 < 0.5."""
    ratio = (omega_q + params.alpha_T) / (params.omega_q_max + params.alpha_T)
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"omega_q = {omega_q:.4e} rad/s is outside the tuning band")
    return math.acos(ratio ** 2) / math.pi


def hamiltonian_matrix(omega_q, omega_c, J, alpha_T):
    """Two-excitation Hamiltonian for given bare frequencies (rad/s)."""
    r2J = math.sqrt(2.0) * J
    H = np.zeros((6, 6))
    H[1, 1] = omega_q
    H[2, 2] = omega_c
    H[1, 2] = H[2, 1] = J
    # transmon |2> sits at 2 omega_q - alpha_T for the -alpha/2 c+c+cc term
    H[3, 3] = 2 * omega_q - alpha_T
    H[4, 4] = omega_c + omega_q
    H[5, 5] = 2 * omega_c
    H[3, 4] = H[4, 3] = r2J
    H[4, 5] = H[5, 4] = r2J
    return H


def build_hamiltonian(params, flux):
    """6x6 real symmetric Hamiltonian at the flux operating point."""
    return hamiltonian_matrix(transmon_frequency(params, flux), params.omega_c,
                              params.J, params.alpha_T)


@dataclass
class PolaritonSpectrum:
    """Eigen-energies and derived quantities of the two-excitation ladder.

    ``eigen_energies`` holds E0..E5 (rad/s, E0 = 0) in state order
    g, -, +, alpha, beta, gamma; ``eigenvectors[:, i]`` is state i in the
    bare basis. Responsivities (rad/s per flux quantum), couplings (rad/s)
    and the upper-polariton Kerr are filled in by :func:`polariton_spectrum`.
    """

    eigen_energies: np.ndarray
    eigenvectors: np.ndarray
    responsivities: dict = field(default_factory=dict)
    couplings: dict = field(default_factory=dict)
    kerr_plus: float | None = None

    @property
    def transitions(self):
        return transition_frequencies(self)

    def frequency(self, label):
        upper, lower, photons = TRANSITIONS[label]
        E = self.eigen_energies
        return (E[upper] - E[lower]) / photons


def diagonalize(H, atol=1e-9):
    """Diagonalize block by block; eigenvalues ascend within each block.

    Raises ``ValueError`` for non-symmetric input or couplings between
    excitation-number blocks.
    """
    H = np.asarray(H, dtype=float)
    if H.shape != (6, 6):
        raise ValueError(f"expected a 6x6 matrix, got shape {H.shape}")
    scale = max(np.abs(H).max(), 1.0)
    if not np.allclose(H, H.T, rtol=0, atol=atol * scale):
        raise ValueError("Hamiltonian is not symmetric")
    mask = np.zeros((6, 6), dtype=bool)
    for block in BLOCKS:
        mask[np.ix_(block, block)] = True
    if np.any(np.abs(H[~mask]) > atol * scale):
        raise ValueError("Hamiltonian couples different excitation-number blocks")

    energies = np.zeros(6)
    vectors = np.zeros((6, 6))
    for block in BLOCKS:
        idx = list(block)
        w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        energies[idx] = w
        # fix the sign convention: largest component positive
        for k in range(len(idx)):
            col = v[:, k]
            if col[np.argmax(np.abs(col))] < 0:
                v[:, k] = -col
        vectors[np.ix_(idx, idx)] = v
    energies = energies - energies[0]
    return PolaritonSpectrum(eigen_energies=energies, eigenvectors=vectors)


def transition_frequencies(spec):
    """Labeled single- and two-photon transition frequencies (rad/s)."""
    return [(label, spec.frequency(label)) for label in TRANSITIONS]


def spectrum_sweep(params, fluxes):
    """Energies along a flux sweep, labels continued by maximum overlap.

    Within each excitation block, the state assigned to a label at step k is
    the one with the largest overlap with that label's state at step k-1,
    so labels follow the physical state through exact crossings (J = 0)
    instead of swapping by energy order.

    Returns an array of shape (len(fluxes), 6).
    """
    out = np.zeros((len(fluxes), 6))
    previous = None
    for k, flux in enumerate(fluxes):
        spec = diagonalize(build_hamiltonian(params, flux))
        E, V = spec.eigen_energies, spec.eigenvectors
        if previous is not None:
            order = np.arange(6)
            for block in BLOCKS[1:]:
                idx = list(block)
                overlap = np.abs(previous[np.ix_(idx, idx)].T @ V[np.ix_(idx, idx)])
                taken = set()
                for i in np.argsort(-overlap.max(axis=1)):
                    choices = [j for j in np.argsort(-overlap[i]) if j not in taken]
                    j = choices[0]
                    taken.add(j)
                    order[idx[i]] = idx[j]
            E = E[order]
            V = V[:, order]
        out[k] = E
        previous = V
    return out


def transition_frequency(params, flux, label):
    return diagonalize(build_hamiltonian(params, flux)).frequency(label)


def flux_responsivity(params, flux, label="plus", h=1e-4, rtol=1e-6):
    """d omega_label / d(Phi / Phi_0) by Richardson-extrapolated central differences.

    The central difference is evaluated at steps h and h/2; their Richardson
    combination gives the estimate. Convergence is judged by repeating the
    extrapolation at h/2 and h/4. Failure, typically next to the half-flux
    singularity, raises :class:`FluxSingularityError`.
    """
    flux = as_flux(flux)
    phi = flux.phi_ratio
    if abs(math.cos(math.pi * phi)) < 4 * h:
        raise FluxSingularityError(
            f"Phi/Phi0 = {phi} is within the finite-difference stencil of the "
            f"half-flux singularity")

    def central(step):
        up = transition_frequency(params, phi + step, label)
        down = transition_frequency(params, phi - step, label)
        return (up - down) / (2 * step)

    d1, d2, d4 = central(h), central(h / 2), central(h / 4)
    g_coarse = (4 * d2 - d1) / 3
    g_fine = (4 * d4 - d2) / 3
    scale = max(abs(g_fine), 1e-12 * params.omega_c)
    if abs(g_coarse - g_fine) > rtol * scale and abs(g_coarse - g_fine) > 1e-6:
        raise FluxSingularityError(
            f"responsivity of '{label}' did not converge at Phi/Phi0 = {phi}: "
            f"{g_coarse:.6e} vs {g_fine:.6e}")
    return g_fine


def zero_point_displacement(mass, omega_m):
    """sqrt(hbar / (2 m omega_m)) in metres."""
    return math.sqrt(constants.hbar / (2 * mass * omega_m))


def coupling_from_responsivity(params, responsivity, b_par):
    """g = xi * G * B_par * l * x_zpf / Phi_0 with G in rad/s per flux quantum."""
    phi0 = constants.h / (2 * constants.e)
    x_zpf = zero_point_displacement(params.mass, params.omega_m)
    return params.xi * responsivity * b_par * params.length_l * x_zpf / phi0


def coupling_g(params, flux, label="plus"):
    """Single-photon electromechanical coupling of one transition (rad/s)."""
    flux = as_flux(flux)
    if flux.b_par < 0:
        raise ValueError("b_par must be non-negative")
    if flux.b_par == 0.0:
        return 0.0
    G = flux_responsivity(params, flux, label)
    return coupling_from_responsivity(params, G, flux.b_par)


def scale_known_g(g_ref, G_ref, G_new):
    """Rescale a measured coupling to another operating point at equal field."""
    return g_ref * G_new / G_ref


def _ladder_operators(n_cav, n_tr):
    a1 = np.diag(np.sqrt(np.arange(1, n_cav)), 1)
    c1 = np.diag(np.sqrt(np.arange(1, n_tr)), 1)
    a = np.kron(a1, np.eye(n_tr))
    c = np.kron(np.eye(n_cav), c1)
    return a, c


def truncated_hamiltonian(omega_q, omega_c, J, alpha_T, dims=(4, 4)):
    """Extended Jaynes-Cummings Hamiltonian on cavity (x) transmon levels.

    Returns ``(H, a, c)``; the tensor order is cavity first.
    """
    a, c = _ladder_operators(*dims)
    ad, cd = a.T, c.T
    H = (omega_c * ad @ a + omega_q * cd @ c - 0.5 * alpha_T * cd @ cd @ c @ c
         + J * (a @ cd + ad @ c))
    return H, a, c


def ladder_kerr(H, a, c, branch="plus"):
    """Kerr of a polariton branch, 2 E(1 polariton) - E(2 polaritons).

    The one-polariton state is the upper (``plus``) or lower (``minus``)
    single-excitation eigenstate ``u_c |1,0> + u_q |0,1>``. Its two-quantum
    analog is the two-excitation eigenstate with the largest overlap with
    ``(u_c a+ + u_q c+)^2 |0> / sqrt(2)``. Differences of eigenvalues make
    the result independent of a global energy offset.
    """
    number = a.T @ a + c.T @ c
    nvals = np.rint(np.diag(number)).astype(int)
    dim = H.shape[0]
    vac = np.zeros(dim)
    vac[np.where(nvals == 0)[0][0]] = 1.0

    def block(n):
        idx = np.where(nvals == n)[0]
        w, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        vecs = np.zeros((dim, len(idx)))
        vecs[idx, :] = v
        return w, vecs

    E0 = block(0)[0][0]
    w1, v1 = block(1)
    k = 1 if branch == "plus" else 0
    E1 = w1[k] - E0
    state1 = v1[:, k]
    u_c = state1 @ (a.T @ vac)
    u_q = state1 @ (c.T @ vac)
    create = u_c * a.T + u_q * c.T
    two = create @ create @ vac / math.sqrt(2.0)
    w2, v2 = block(2)
    j = int(np.argmax(np.abs(v2.T @ two)))
    E2 = w2[j] - E0
    return 2 * E1 - E2


def kerr_estimate(params, flux, branch="plus", dims=(4, 4), check_dims=(5, 5),
                  rtol=0.01):
    """Kerr nonlinearity K of a polariton branch (rad/s, positive = softening).

    Warns when enlarging the truncation from ``dims`` to ``check_dims``
    moves K by more than ``rtol``.
    """
    omega_q = transmon_frequency(params, flux)
    H, a, c = truncated_hamiltonian(omega_q, params.omega_c, params.J, params.alpha_T, dims)
    K = ladder_kerr(H, a, c, branch)
    if check_dims is not None:
        H2, a2, c2 = truncated_hamiltonian(omega_q, params.omega_c, params.J,
                                           params.alpha_T, check_dims)
        K2 = ladder_kerr(H2, a2, c2, branch)
        if abs(K2 - K) > rtol * max(abs(K), 1e-12 * params.omega_c):
            warnings.warn(f"Kerr estimate changed from {K:.4e} to {K2:.4e} on "
                          f"enlarging truncation {dims} -> {check_dims}",
                          RuntimeWarning, stacklevel=2)
    return K


def polariton_spectrum(params, flux, labels=("minus", "plus", "minus_alpha", "minus_beta"),
                       responsivity=True):
    """Diagonalize and attach responsivities, couplings and K_plus."""
    flux = as_flux(flux)
    spec = diagonalize(build_hamiltonian(params, flux))
    if responsivity:
        for label in labels:
            G = flux_responsivity(params, flux, label)
            spec.responsivities[label] = G
            spec.couplings[label] = coupling_from_responsivity(params, G, flux.b_par)
    spec.kerr_plus = kerr_estimate(params, flux)
    return spec
