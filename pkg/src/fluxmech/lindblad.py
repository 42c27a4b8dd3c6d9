"""Steady-state transmission of the driven, damped transmon-cavity system.

The density matrix is vectorized column-wise, ``vec(A X B) = (B^T kron A) vec(X)``,
so the Liouvillian is an ordinary dense matrix. Hilbert spaces here are tiny
(at most 16 levels), so a dense solve is both exact and fast.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import SingularLiouvillianError
from .spectrum import transmon_frequency


@dataclass(frozen=True)
class LindbladConfig:
    """Truncation, bath and drive settings for the master-equation model.

    ``drive_freq`` is only used by :func:`steady_state`; transmission sweeps
    take their drive frequencies from the grid.
    """

    dim_cavity: int = 3
    dim_transmon: int = 3
    n_th_cavity: float = 0.0
    n_th_transmon: float = 0.0
    gamma_q: float = 2 * math.pi * 1e6
    drive_amp: float = 2 * math.pi * 0.1e6
    drive_freq: float | None = None

    def __post_init__(self):
        if self.dim_cavity < 2 or self.dim_transmon < 2:
            raise ValueError("truncation dimensions must be at least 2")
        if self.n_th_cavity < 0 or self.n_th_transmon < 0:
            raise ValueError("thermal occupations must be non-negative")
        if self.gamma_q < 0:
            raise ValueError("gamma_q must be non-negative")


def _operators(dc, dq):
    a1 = np.diag(np.sqrt(np.arange(1, dc)), 1).astype(complex)
    c1 = np.diag(np.sqrt(np.arange(1, dq)), 1).astype(complex)
    return np.kron(a1, np.eye(dq)), np.kron(np.eye(dc), c1)


def _dissipator(L):
    n = L.shape[0]
    eye = np.eye(n)
    LdL = L.conj().T @ L
    return (np.kron(L.conj(), L)
            - 0.5 * np.kron(eye, LdL)
            - 0.5 * np.kron(LdL.T, eye))


def liouvillian(H, collapse):
    """Superoperator of ``d rho/dt = -i[H, rho] + sum_k D[L_k] rho``."""
    n = H.shape[0]
    eye = np.eye(n)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for op in collapse:
        L = L + _dissipator(op)
    return L


def rotating_hamiltonian(omega_c, omega_q, J, alpha_T, drive_amp, drive_freq,
                         dims=(3, 3)):
    """Extended Jaynes-Cummings Hamiltonian with a cavity drive, in the drive frame."""
    a, c = _operators(*dims)
    ad, cd = a.conj().T, c.conj().T
    H = ((omega_c - drive_freq) * ad @ a + (omega_q - drive_freq) * cd @ c
         - 0.5 * alpha_T * cd @ cd @ c @ c
         + J * (a @ cd + ad @ c)
         + drive_amp * (a + ad))
    return H, a, c


def thermal_collapse(a, c, kappa, gamma_q, n_c, n_q):
    ops = [math.sqrt(kappa * (n_c + 1)) * a]
    if n_c > 0:
        ops.append(math.sqrt(kappa * n_c) * a.conj().T)
    if gamma_q > 0:
        ops.append(math.sqrt(gamma_q * (n_q + 1)) * c)
        if n_q > 0:
            ops.append(math.sqrt(gamma_q * n_q) * c.conj().T)
    return ops


def solve_steady_state(L, max_condition=1e13):
    """Null vector of ``L`` normalized to unit trace, as a density matrix.

    One row of the singular system is replaced by the trace functional. A
    condition estimate above ``max_condition`` means the steady state is not
    unique (or the Liouvillian is degenerate) and raises
    :class:`SingularLiouvillianError`.
    """
    n2 = L.shape[0]
    n = int(round(math.sqrt(n2)))
    M = np.array(L, dtype=complex)
    # the trace constraint replaces the first row (an arbitrary choice; any
    # row is linearly dependent on the others when L has a 1D null space)
    M[0, :] = np.eye(n).reshape(-1, order="F")
    rhs = np.zeros(n2, dtype=complex)
    rhs[0] = 1.0
    cond = np.linalg.cond(M, 1)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularLiouvillianError("steady-state system is ill-conditioned", cond)
    vec = np.linalg.solve(M, rhs)
    rho = vec.reshape((n, n), order="F")
    return 0.5 * (rho + rho.conj().T)


def steady_state(params, flux, cfg: LindbladConfig):
    """Steady-state density matrix at ``cfg.drive_freq`` (cavity levels first)."""
    if cfg.drive_freq is None:
        raise ValueError("cfg.drive_freq is required")
    omega_q = transmon_frequency(params, flux)
    dims = (cfg.dim_cavity, cfg.dim_transmon)
    H, a, c = rotating_hamiltonian(params.omega_c, omega_q, params.J, params.alpha_T,
                                   cfg.drive_amp, cfg.drive_freq, dims)
    ops = thermal_collapse(a, c, params.kappa_b, cfg.gamma_q,
                           cfg.n_th_cavity, cfg.n_th_transmon)
    return solve_steady_state(liouvillian(H, ops))


def lindblad_response(params, flux, cfg: LindbladConfig, freq_grid):
    """Complex <a> / epsilon across drive frequencies (rad/s)."""
    if cfg.dim_cavity * cfg.dim_transmon > 16:
        raise ValueError("Hilbert space larger than 16 levels is outside the supported range")
    omega_q = transmon_frequency(params, flux)
    dims = (cfg.dim_cavity, cfg.dim_transmon)
    a, c = _operators(*dims)
    ad, cd = a.conj().T, c.conj().T
    ops = thermal_collapse(a, c, params.kappa_b, cfg.gamma_q,
                           cfg.n_th_cavity, cfg.n_th_transmon)
    n = a.shape[0]
    eye = np.eye(n)
    # frequency-independent pieces of the Liouvillian
    H_fixed = (params.omega_c * ad @ a + omega_q * cd @ c
               - 0.5 * params.alpha_T * cd @ cd @ c @ c
               + params.J * (a @ cd + ad @ c) + cfg.drive_amp * (a + ad))
    number = ad @ a + cd @ c

    def comm(X):
        return -1j * (np.kron(eye, X) - np.kron(X.T, eye))

    L_fixed = comm(H_fixed)
    for op in ops:
        L_fixed = L_fixed + _dissipator(op)
    L_number = comm(number)
    # tr(a rho) = vec(a^T) . vec(rho)
    a_row = a.T.reshape(-1, order="F")

    out = np.empty(len(freq_grid), dtype=complex)
    for k, wd in enumerate(np.asarray(freq_grid, dtype=float)):
        rho = solve_steady_state(L_fixed - wd * L_number)
        out[k] = (a_row @ rho.reshape(-1, order="F")) / cfg.drive_amp
    return out


def lindblad_transmission(params, flux, cfg: LindbladConfig, freq_grid):
    """|<a>| / epsilon across drive frequencies (rad/s).

    Proportional to |S21| for a two-port cavity; multiply by the port
    coupling if absolute transmission is needed.
    """
    return np.abs(lindblad_response(params, flux, cfg, freq_grid))


def resonance_center(freqs, response, guess, halfwidth_guess):
    """Center and FWHM of one resonance in a complex response.

    Fits ``A / (w/2 - i(f - f0)) + b0 + b1 (f - guess)`` by least squares.
    The maximum of |response| is pulled away from ``f0`` wherever a
    resonance rides on the coherent tail of a stronger neighbour; the
    complex fit removes that pull. Returns ``(f0, w)`` in the units of
    ``freqs``.
    """
    from scipy.optimize import least_squares

    f = np.asarray(freqs, dtype=float)
    y = np.asarray(response, dtype=complex)
    scale = halfwidth_guess
    x = (f - guess) / scale

    def model(q):
        A = q[0] + 1j * q[1]
        return A / (q[3] / 2 - 1j * (x - q[2])) + (q[4] + 1j * q[5]) + (q[6] + 1j * q[7]) * x

    def residual(q):
        r = model(q) - y
        return np.concatenate([r.real, r.imag])

    peak = np.abs(y).max()
    q0 = [peak, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]
    sol = least_squares(residual, q0, method="lm")
    return guess + sol.x[2] * scale, abs(sol.x[3]) * scale
