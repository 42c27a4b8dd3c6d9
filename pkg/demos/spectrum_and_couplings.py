"""Polariton spectrum of device 2 at transmon-cavity resonance and the
single-photon couplings of each transition in a 9 mT in-plane field."""

import math

from fluxmech.device import DEVICE_2, FluxPoint
from fluxmech.polariton_tls import enumerate_transitions
from fluxmech.spectrum import (build_hamiltonian, diagonalize, flux_for_transmon_frequency,
                               polariton_spectrum, transition_frequencies)

TWO_PI = 2 * math.pi

phi = flux_for_transmon_frequency(DEVICE_2, DEVICE_2.omega_c)
spec = diagonalize(build_hamiltonian(DEVICE_2, phi))
print(f"resonant flux: {phi:.5f} flux quanta")
for label, w in transition_frequencies(spec):
    print(f"  {label:12s} {w / TWO_PI / 1e9:.4f} GHz")

sp = polariton_spectrum(DEVICE_2, FluxPoint(phi, 9e-3))
print("couplings at 9 mT:")
for t in enumerate_transitions(sp, DEVICE_2.omega_m, DEVICE_2.gamma_m):
    print(f"  {t.label:12s} g/2pi = {t.g_i / TWO_PI / 1e3:8.1f} kHz  weight {t.thermal_weight:.2f}")
