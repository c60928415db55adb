"""
Temporal correlation smooths the staircase
==========================================

White sources give sharp steps because each microphone's information
arrives all at once.  A coloured source spreads that information over
time: its own past predicts its future, so part of each step is already
available before the wavefront arrives.  Two views of this:

* a single channel with an AR(1) target, where the spectral-factor
  penalty and a long FIR design agree;
* the two-source scene with a speech-shaped spectrum instead of white,
  whose largest single-sample jump is much smaller.

Run from the repository root::

    python demos/03_temporal_shaping.py
"""

import numpy as np

from causalmwf.correlation import Scene, SpectralDensity
from causalmwf.fir import delay_sweep
from causalmwf.spectral import scalar_causal_delay_error
from causalmwf.synthesis import ar1_psd, speech_shaped_psd, two_source_scene

from _common import maybe_plot, table

fs = 16000.0
grid = 8192

# -- single channel: penalty form against the FIR design
alphas = np.array([0, 1, 2, 5, 10])
rows = []
for a in (0.5, 0.9):
    src = ar1_psd(a, grid, fs)
    noise = SpectralDensity.flat(0.1, grid, fs)
    obs = SpectralDensity(src.values + noise.values, fs)
    pen = scalar_causal_delay_error(src, obs, src, alphas, in_samples=True)
    fir = delay_sweep(Scene((src,), np.ones((1, 1, 1)), (noise,)), 1024, alphas,
                      in_samples=True)
    for k, e_pen, e_fir in zip(alphas, pen.mse_db, fir.mse_db):
        rows.append((a, int(k), float(e_pen), float(e_fir)))
print("AR(1) target in noise of power 0.1: error [dB] against delay [samples]")
table(rows, ["a", "alpha", "penalty", "FIR"])

# -- two sources: white against speech-shaped
fs2 = 20000.0
alphas2 = np.arange(-40, 81) / fs2
white = delay_sweep(two_source_scene(1e-3, 0.6e-3, 0.01, fs=fs2), 512, alphas2)
speech = delay_sweep(two_source_scene(1e-3, 0.6e-3, 0.01, speech_shaped_psd(grid, fs2),
                                      fs=fs2), 512, alphas2)
for name, c in (("white", white), ("speech-shaped", speech)):
    print(f"{name:>14}: largest single-sample jump {np.max(np.abs(np.diff(c.mse_db))):.2f} dB")

maybe_plot("temporal_shaping", [("white", white), ("speech-shaped", speech)],
           "two sources at (+1, +0.6) ms")
