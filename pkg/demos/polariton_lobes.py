"""Instability lobes of the four polariton transitions treated as driven
two-level systems, each coupled to the mechanics. Takes about 10 s."""

import math

import numpy as np

from fluxmech.device import DEVICE_2, FluxPoint
from fluxmech.polariton_tls import count_lobes, enumerate_transitions, lobe_onsets, union_instability_map
from fluxmech.spectrum import flux_for_transmon_frequency, polariton_spectrum

TWO_PI = 2 * math.pi

phi = flux_for_transmon_frequency(DEVICE_2, DEVICE_2.omega_c)
sp = polariton_spectrum(DEVICE_2, FluxPoint(phi, 9e-3))
trs = enumerate_transitions(sp, DEVICE_2.omega_m, DEVICE_2.gamma_m, g_plus_ref=TWO_PI * 160e3)
eps = TWO_PI * np.geomspace(0.01e6, 20e6, 50)
wds = TWO_PI * np.arange(5.40e9, 5.97e9, 1e6)
m = union_instability_map(trs, eps, wds)
print(f"{count_lobes(m.unstable)} lobes")
for label, e in lobe_onsets(m).items():
    print(f"  {label:12s} onset drive {e / TWO_PI / 1e6:.3g} MHz")
