"""
Delay staircase of a uniform linear array
=========================================

A white source reaches an M-microphone line array with a constant
inter-mic delay tau, and every mic adds white noise of power sigma2.  The
causal Wiener filter estimating the source at mic 0 can only use a mic
once the wavefront has reached it within the allowed delay, so the error
falls in M discrete steps, one per microphone, spaced tau apart.

Run from the repository root::

    python demos/01_ula_staircase.py
"""

import numpy as np

from causalmwf.analytic import UlaScenario, ula_curve
from causalmwf.fir import delay_sweep
from causalmwf.synthesis import ula_scene

from _common import at, maybe_plot, table

fs = 16000.0
tau = 0.5e-3
sigma2 = 10 ** (-20 / 10)

# closed form against a 512-tap FIR design, for 2, 4 and 8 mics
alphas = np.arange(-16, 8 * 8 + 17) / fs
curves = []
rows = []
for m in (2, 4, 8):
    s = UlaScenario(m, tau, sigma2)
    ana = ula_curve(s, alphas)
    fir = delay_sweep(ula_scene(m, tau, sigma2, fs=fs), 512, alphas)
    curves += [(f"M={m} closed form", ana), (f"M={m} FIR", fir)]
    # centre of each plateau: half a step past each arrival
    for k in range(m):
        a_ms = (k + 0.5) * tau * 1e3
        rows.append((m, k + 1, a_ms, at(ana, a_ms), at(fir, a_ms)))

print("Plateau levels, sigma2 = -20 dB, tau = 0.5 ms")
table(rows, ["mics", "mics used", "alpha [ms]", "closed [dB]", "FIR [dB]"])

# each new microphone contributes less: the plateaus approach sigma2/(sigma2+M)
for m in (2, 4, 8):
    print(f"M={m}: final plateau {10 * np.log10(sigma2 / (sigma2 + m)):.2f} dB")

maybe_plot("ula_staircase", curves, "ULA, tau = 0.5 ms, sigma2 = -20 dB")
