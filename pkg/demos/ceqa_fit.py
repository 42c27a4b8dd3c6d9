"""Probe absorption dip in the weak-Kerr limit and a coupling-rate fit.

Generates a noisy synthetic trace with g/2pi = 40 kHz, fits it and prints
the estimate with its one-sigma error.
"""

import math

import numpy as np

from fluxmech.backaction import KerrModeConfig
from fluxmech.ceqa import PumpProbeConfig, epsilon_for_photon_number, fit_g, weak_kerr_response

TWO_PI = 2 * math.pi

cfg = KerrModeConfig(omega_plus=TWO_PI * 5.884e9, kerr_plus=TWO_PI * 6.47e6, kappa=TWO_PI * 11.5e6,
                     g_plus=TWO_PI * 40e3, omega_m=TWO_PI * 3.97e6, gamma_m=TWO_PI * 13)
eps = epsilon_for_photon_number(cfg, -cfg.omega_m, 0.058)
pp = PumpProbeConfig(eps, cfg.omega_plus - cfg.omega_m, eps / 2)
delta = cfg.omega_m + np.linspace(-40, 40, 501) * cfg.gamma_m

rng = np.random.default_rng(7)
clean = np.abs(weak_kerr_response(cfg, pp, delta))
trace = clean * (1 + 0.01 * rng.standard_normal(delta.size))
k = int(np.argmin(clean))
print(f"dip depth {1 - clean[k] / clean[0]:.3%} at probe offset "
      f"{(delta[k] - cfg.omega_m) / TWO_PI:+.2f} Hz from omega_m")

guess = cfg.with_(g_plus=TWO_PI * 30e3, gamma_m=TWO_PI * 10)
r = fit_g(delta, trace, "weak", guess, pp, noise="multiplicative")
print(f"fitted g/2pi = {r.g / TWO_PI / 1e3:.2f} +- {r.g_sigma / TWO_PI / 1e3:.2f} kHz (truth 40 kHz)")
