"""Mechanical limit cycle and frequency comb from a time-domain run.

The coupling is scaled up (and the mechanical damping with it) so the
limit cycle forms within a few hundred mechanical periods; the stability
boundary is unchanged by this scaling. Takes about 15 s.
"""

import math

from fluxmech.backaction import KerrModeConfig
from fluxmech.timedomain import accelerate, comb_run

TWO_PI = 2 * math.pi
MHZ = TWO_PI * 1e6

cfg = KerrModeConfig(omega_plus=TWO_PI * 5.873e9, kerr_plus=TWO_PI * 8.55e6, kappa=TWO_PI * 9e6,
                     g_plus=TWO_PI * 45e3, omega_m=TWO_PI * 3.97e6, gamma_m=TWO_PI * 6)
run = comb_run(accelerate(cfg, 30), 4 * MHZ, 2 * MHZ)
print(f"status {run.status}, comb detected: {run.detected}")
print(f"tooth spacing {run.spacing / 1e6:.4f} MHz (mechanics at {cfg.omega_m / TWO_PI / 1e6:.2f} MHz)")
for f, p in sorted(run.spectrum.peaks, key=lambda fp: -fp[1])[:7]:
    print(f"  {f / 1e6:+8.3f} MHz  {p:.3e}")
