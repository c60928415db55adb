"""
Harmonic sources and array size
===============================

Sung vowels are harmonic: their energy sits on a few partials that rarely
coincide between voices.  A single microphone can then separate them by
frequency alone, given enough delay for the filter to resolve the
harmonics.  The more voices, the more delay is needed.

With several microphones the spatial cue does the work instead, and a
larger array reaches a low error at small delay.  A binaural pair needs
substantially more delay to catch up with an eight-mic ring.

Run from the repository root::

    python demos/04_vowels_and_arrays.py
"""

import numpy as np

from causalmwf.correlation import Scene, SpectralDensity, autocorr_to_psd
from causalmwf.fir import delay_sweep
from causalmwf.spectral import scene_scalar_curve
from causalmwf.synthesis import (VOWEL_PRESETS, PlaneWaveArraySpec, azimuth, plane_wave_scene,
                                 render_sources, windowed_autocorrelation)

from _common import at, maybe_plot, table

fs = 16000.0
grid = 8192

# long-term spectra from 50 ms windowed autocorrelations of 10 s renders
sig = render_sources(list(VOWEL_PRESETS), 10.0, fs)
vowels = [autocorr_to_psd(windowed_autocorrelation(s, fs, 0.05), grid) for s in sig]
for spec, v in zip(VOWEL_PRESETS, vowels):
    print(f"f0 = {spec.f0:6.1f} Hz, formants {[f for f, _ in spec.formants]}")

# -- one microphone, 2 to 4 voices
alphas = np.arange(-80, 641, 4) / fs
curves = []
rows = []
noise = SpectralDensity.flat(1e-3 * vowels[0].power, grid, fs)
for n in (2, 3, 4):
    scene = Scene(tuple(vowels[:n]), np.ones((1, n, 1)), (noise,))
    c = scene_scalar_curve(scene, alphas)
    curves.append((f"{n} voices", c))
    rows.append((n, at(c, 0.0), at(c, 10.0), at(c, 20.0), at(c, 40.0)))
print("\nSingle microphone, target voice 0: error [dB]")
table(rows, ["voices", "0 ms", "10 ms", "20 ms", "40 ms"])
maybe_plot("vowels_single_mic", curves, "one microphone, harmonic voices")


def circle(m, r):
    a = 2 * np.pi * np.arange(m) / m
    return np.stack([r * np.cos(a), r * np.sin(a), np.zeros(m)], axis=1)


# -- four voices from fixed azimuths, three array sizes
arrays = {"binaural": np.array([[0, 0.09, 0], [0, -0.09, 0]]),
          "4-mic ring": circle(4, 0.12), "8-mic ring": circle(8, 0.16)}
dirs = np.stack([azimuth(a) for a in (0.0, 40.0, -70.0, 200.0)])
unit = [v.scaled(1 / v.power) for v in vowels]
alphas = np.arange(-16, 161, 4) / fs
rows = []
curves = []
for name, pos in arrays.items():
    tdoas = PlaneWaveArraySpec(pos, dirs).tdoas()
    scene = plane_wave_scene(tdoas, tuple(unit), SpectralDensity.flat(1e-3, grid, fs),
                             fs=fs, grid_size=grid)
    c = delay_sweep(scene, 512, alphas)
    curves.append((name, c))
    rows.append((name, at(c, 0.0), at(c, 5.0), at(c, 10.0)))
print("\nFour voices, 512-tap filters: error [dB]")
table(rows, ["array", "0 ms", "5 ms", "10 ms"])
maybe_plot("vowels_arrays", curves, "four voices, three arrays")
