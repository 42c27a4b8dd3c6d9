"""Parametric instability of the upper polariton: damping map and threshold.

Prints the minimum photon number at which the mechanics starts to
self-oscillate and a coarse text rendering of the unstable region.
"""

import math

import numpy as np

from fluxmech.backaction import KerrModeConfig, backaction_map, minimum_threshold

TWO_PI = 2 * math.pi
MHZ = TWO_PI * 1e6

cfg = KerrModeConfig(omega_plus=TWO_PI * 5.873e9, kerr_plus=TWO_PI * 8.55e6, kappa=TWO_PI * 9e6,
                     g_plus=TWO_PI * 45e3, omega_m=TWO_PI * 3.97e6, gamma_m=TWO_PI * 6)

dets = np.linspace(-10, 15, 251) * MHZ
for g_khz in (45, 160):
    n, d = minimum_threshold(cfg.with_(g_plus=TWO_PI * g_khz * 1e3), dets)
    print(f"g/2pi = {g_khz} kHz: threshold n_d = {n:.3g} at detuning {d / MHZ:+.1f} MHz")

eps = np.linspace(0.05, 3, 20) * MHZ
grid = np.linspace(-10, 15, 60) * MHZ
m = backaction_map(cfg, eps, grid)
print("\nunstable region (# = self-oscillation), drive increasing upward, detuning -10..15 MHz")
for i in range(len(eps) - 1, -1, -1):
    row = "".join("#" if not s else "." for s in m.stable_flag[i])
    print(f"{eps[i] / MHZ:5.2f} MHz |{row}|")
