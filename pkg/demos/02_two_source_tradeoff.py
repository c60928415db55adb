"""
Two white sources and the geometric tail
========================================

Two white sources hit a pair of microphones with TDOAs tau1 (the target)
and tau2 (the interferer).  The noncausal Wiener filter cancels the
interferer with an infinitely long two-sided response whose taps decay
geometrically with ratio gamma, so the causal error approaches the
noncausal floor through an infinite sequence of ever smaller steps.

The sample rate is 20 kHz so that 1 ms and 0.6 ms are integer lags and
the FIR design reproduces the closed form exactly between step edges.

Run from the repository root::

    python demos/02_two_source_tradeoff.py
"""

import numpy as np

from causalmwf.analytic import (TwoSourceScenario, noncausal_mse, two_source_curve,
                                two_source_gamma)
from causalmwf.fir import delay_sweep
from causalmwf.synthesis import two_source_scene

from _common import at, maybe_plot, table

fs = 20000.0
sigma2 = 0.01
alphas = np.arange(-40, 161) / fs  # -2 .. 8 ms

g = two_source_gamma(sigma2)
print(f"sigma2 = {sigma2}: tail ratio gamma = {g:.5f}, energy per period falls by "
      f"{-20 * np.log10(g):.2f} dB")

rows = []
curves = []
for tau1, tau2 in [(1e-3, 0.6e-3), (-1e-3, -0.6e-3), (1e-3, -0.6e-3), (-1e-3, 0.6e-3)]:
    s = TwoSourceScenario(tau1, tau2, sigma2)
    scene = two_source_scene(tau1, tau2, sigma2, fs=fs)
    ana = two_source_curve(s, alphas)
    fir = delay_sweep(scene, 512, alphas)
    floor = 10 * np.log10(noncausal_mse(scene) / scene.target_power)
    label = f"({tau1 * 1e3:+g}, {tau2 * 1e3:+g}) ms"
    curves.append((label, ana))
    rows.append((label, at(ana, 0.0), at(ana, 4.0), at(fir, 4.0), at(ana, 8.0), floor))

print("\nError [dB] at three delays against the noncausal floor")
table(rows, ["(tau1,tau2)", "0 ms", "4 ms", "4 ms FIR", "8 ms", "floor"])

# Same-side placements have one tail family spaced |tau1 - tau2| apart.
# Opposite-side placements interleave two such families, each with the
# same period, so convergence per millisecond of delay is slower.
print(f"\nstep period |tau1 - tau2| = {abs(1e-3 - 0.6e-3) * 1e3:.1f} ms (same side), "
      f"{abs(1e-3 + 0.6e-3) * 1e3:.1f} ms per family (opposite sides)")

maybe_plot("two_source", curves, "two white sources, sigma2 = -20 dB")
