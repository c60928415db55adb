"""Synthetic scenes and signals.

Plane-wave mixing is realized with Hann-windowed sinc fractional delays.
Every response in a scene shares one front padding so that all of them are
causal; because the desired signal is built from the padded reference
response the padding cancels out of every delay-error curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.signal

from .correlation import (
    DEFAULT_FS,
    DEFAULT_GRID_SIZE,
    CorrelationSequence,
    Scene,
    SpectralDensity,
)

SPEED_OF_SOUND = 343.0
DEFAULT_FD_TAPS = 64


# ---------------------------------------------------------------------------
# Fractional delays and plane-wave geometry
# ---------------------------------------------------------------------------


def fractional_delay_fir(delay: float, fs: float = DEFAULT_FS,
                         taps: int = DEFAULT_FD_TAPS,
                         padding: int | None = None) -> np.ndarray:
    """Hann-windowed sinc delay of ``delay`` seconds plus ``padding`` samples.

    The sinc is centred at ``padding + delay * fs`` and spans ``taps`` samples.
    ``padding`` defaults to ``taps // 2``, which only admits nonnegative
    delays.  Integer-sample delays give an exact unit impulse.
    """
    if taps < 32 or taps % 2:
        raise ValueError("taps must be even and >= 32")
    half = taps // 2
    if padding is None:
        padding = half
    centre = padding + delay * fs
    if centre < half - 1e-9:
        raise ValueError(
            f"delay {delay * 1e3:.4g} ms needs more than {padding} samples of padding")
    nearest = round(centre)
    if abs(centre - nearest) < 1e-9:
        h = np.zeros(nearest + half + 1)
        h[nearest] = 1.0
        return h
    n = np.arange(int(math.ceil(centre + half)) + 1)
    x = n - centre
    window = np.where(np.abs(x) < half, 0.5 + 0.5 * np.cos(np.pi * x / half), 0.0)
    return np.sinc(x) * window


def padding_for(tdoas, fs: float, taps: int = DEFAULT_FD_TAPS) -> int:
    """Smallest common front padding that keeps every delay causal."""
    lead = max(0.0, -float(np.min(tdoas)) * fs)
    return taps // 2 + int(math.ceil(lead - 1e-9))


def delay_responses(tdoas, fs: float = DEFAULT_FS, taps: int = DEFAULT_FD_TAPS,
                    padding: int | None = None) -> tuple[np.ndarray, int]:
    """(M, N, K) responses for a table of TDOAs, and the padding used."""
    tdoas = np.atleast_2d(np.asarray(tdoas, dtype=float))
    if padding is None:
        padding = padding_for(tdoas, fs, taps)
    irs = [[fractional_delay_fir(t, fs, taps, padding) for t in row] for row in tdoas]
    k = max(h.size for row in irs for h in row)
    out = np.zeros(tdoas.shape + (k,))
    for m, row in enumerate(irs):
        for n, h in enumerate(row):
            out[m, n, :h.size] = h
    return out, padding


@dataclass(frozen=True)
class PlaneWaveArraySpec:
    """Far-field array geometry.

    ``source_directions`` are unit vectors pointing from the array towards
    each source.  The TDOA of source ``n`` at mic ``m`` is measured relative
    to the reference mic and is positive when mic ``m`` hears it later.
    """

    mic_positions: np.ndarray
    source_directions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND
    reference_mic: int = 0

    def tdoas(self) -> np.ndarray:
        p = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        u = np.atleast_2d(np.asarray(self.source_directions, dtype=float))
        u = u / np.linalg.norm(u, axis=1, keepdims=True)
        rel = p - p[self.reference_mic]
        tau = -(rel @ u.T) / self.speed_of_sound
        if not np.all(np.isfinite(tau)):
            raise ValueError("non-finite TDOA")
        return tau


def azimuth(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    return np.array([np.cos(a), np.sin(a), 0.0])


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------


def folded_frequencies(grid_size: int, fs: float) -> np.ndarray:
    k = np.arange(grid_size)
    return np.minimum(k, grid_size - k) * fs / grid_size


def speech_shaped_psd(grid_size: int = DEFAULT_GRID_SIZE, fs: float = DEFAULT_FS,
                      corner: float = 500.0, power: float = 1.0) -> SpectralDensity:
    """Low-pass stand-in for a long-term speech spectrum.

    Flat below ``corner`` Hz and falling 6 dB per octave above it
    (``1 / (1 + (f / corner)^2)``), scaled to the requested power.
    """
    f = folded_frequencies(grid_size, fs)
    v = 1.0 / (1.0 + (f / corner) ** 2)
    return SpectralDensity(power * v / v.mean(), fs)


def ar1_psd(a: float, grid_size: int = DEFAULT_GRID_SIZE, fs: float = DEFAULT_FS,
            gain: float = 1.0) -> SpectralDensity:
    """``gain / |1 - a e^{-jw}|^2``: the spectrum of a unit-innovation AR(1) process."""
    w = 2 * np.pi * np.arange(grid_size) / grid_size
    return SpectralDensity(gain / np.abs(1 - a * np.exp(-1j * w)) ** 2, fs)


def random_smooth_psd(rng: np.random.Generator, grid_size: int = DEFAULT_GRID_SIZE,
                      fs: float = DEFAULT_FS, order: int = 4,
                      dynamic_range_db: float = 20.0) -> SpectralDensity:
    """Random smooth unit-power spectrum: exp of a low-order cosine series."""
    w = 2 * np.pi * np.arange(grid_size) / grid_size
    coef = rng.normal(size=order) / np.arange(1, order + 1)
    log_shape = sum(c * np.cos((k + 1) * w) for k, c in enumerate(coef))
    span = np.ptp(log_shape) or 1.0
    log_shape *= (dynamic_range_db / 10 * np.log(10)) / span
    v = np.exp(log_shape)
    return SpectralDensity(v / v.mean(), fs)


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------


def _as_spectra(spec, count: int, grid_size: int, fs: float) -> tuple:
    if isinstance(spec, SpectralDensity):
        return (spec,) * count
    if np.isscalar(spec):
        return (SpectralDensity.flat(float(spec), grid_size, fs),) * count
    spec = tuple(spec)
    if len(spec) != count:
        raise ValueError(f"expected {count} spectra, got {len(spec)}")
    return spec


def plane_wave_scene(tdoas, source_spectra=1.0, noise=0.01, *,
                     fs: float = DEFAULT_FS, grid_size: int = DEFAULT_GRID_SIZE,
                     taps: int = DEFAULT_FD_TAPS, reference_mic: int = 0,
                     target_source: int = 0, label: str = "") -> Scene:
    """Anechoic scene from an (M, N) table of TDOAs in seconds.

    ``source_spectra`` and ``noise`` accept a scalar (white level), one
    :class:`SpectralDensity` shared by all, or one per source / mic.
    """
    tdoas = np.atleast_2d(np.asarray(tdoas, dtype=float))
    m, n = tdoas.shape
    irs, pad = delay_responses(tdoas, fs, taps)
    return Scene(
        _as_spectra(source_spectra, n, grid_size, fs),
        irs,
        _as_spectra(noise, m, grid_size, fs),
        reference_mic=reference_mic,
        target_source=target_source,
        padding=pad,
        label=label,
    )


def ula_scene(num_mics: int, tau: float, sigma2: float, **kwargs) -> Scene:
    """Single white unit-power plane wave on a uniform linear array."""
    tdoas = (np.arange(num_mics) * tau)[:, None]
    return plane_wave_scene(tdoas, 1.0, sigma2, **kwargs)


def two_source_scene(tau1: float, tau2: float, sigma2: float,
                     source_spectrum=1.0, noise=None, **kwargs) -> Scene:
    """Two plane waves on two mics; the target has TDOA ``tau1``.

    With a shaped ``source_spectrum`` and ``noise=None`` the noise is given
    the same shape (``sigma2`` times the source spectrum), so every entry of
    the observation spectrum shares one scalar factor.
    """
    if noise is None:
        noise = (source_spectrum.scaled(sigma2)
                 if isinstance(source_spectrum, SpectralDensity) else sigma2)
    tdoas = np.array([[0.0, 0.0], [tau1, tau2]])
    return plane_wave_scene(tdoas, source_spectrum, noise, **kwargs)


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HarmonicSourceSpec:
    """Stationary vowel-like source: harmonics of ``f0`` through formant resonators.

    ``formants`` holds ``(centre_hz, bandwidth_hz)`` pairs, each realized as a
    two-pole resonator; partial phases are drawn from ``seed``.
    """

    f0: float
    formants: tuple = ((700.0, 90.0), (1200.0, 110.0), (2600.0, 160.0))
    power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.f0 <= 0:
            raise ValueError("f0 must be positive")
        if self.power <= 0:
            raise ValueError("power must be positive")

    def partials(self, fs: float) -> tuple[np.ndarray, np.ndarray]:
        """Partial frequencies and amplitudes, normalized to ``power``."""
        freqs = self.f0 * np.arange(1, int((0.5 * fs - 1e-9) // self.f0) + 1)
        gain = np.ones_like(freqs)
        for fc, bw in self.formants:
            r = np.exp(-np.pi * bw / fs)
            theta = 2 * np.pi * fc / fs
            z = np.exp(-2j * np.pi * freqs / fs)
            gain = gain * np.abs(1.0 / (1 - 2 * r * np.cos(theta) * z + r * r * z * z))
        amps = gain * math.sqrt(2 * self.power / np.sum(gain ** 2))
        return freqs, amps


# Four vowel-like presets in different keys; formants after classic
# adult-male measurements of /a/, /i/, /u/, /ae/.
VOWEL_PRESETS = (
    HarmonicSourceSpec(110.0, ((730.0, 80.0), (1090.0, 90.0), (2440.0, 120.0)), seed=1),
    HarmonicSourceSpec(185.0, ((270.0, 60.0), (2290.0, 100.0), (3010.0, 120.0)), seed=2),
    HarmonicSourceSpec(147.0, ((300.0, 60.0), (870.0, 80.0), (2240.0, 120.0)), seed=3),
    HarmonicSourceSpec(262.0, ((660.0, 80.0), (1720.0, 100.0), (2410.0, 120.0)), seed=4),
)


def _spawn(seed, count: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def colored_noise(psd: SpectralDensity, num_samples: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with spectrum ``psd`` (white noise through its minimum-phase factor)."""
    from .spectral import scalar_spectral_factor

    g = scalar_spectral_factor(psd).impulse_response
    keep = np.nonzero(np.abs(g) > 1e-12 * np.max(np.abs(g)))[0]
    g = g[: keep[-1] + 1]
    white = rng.standard_normal(num_samples + g.size - 1)
    return scipy.signal.fftconvolve(white, g, mode="valid")


def render_sources(specs: Sequence, duration: float, fs: float = DEFAULT_FS,
                   seed: int = 0) -> np.ndarray:
    """Render ``N`` source signals of ``duration`` seconds, shape (N, T).

    ``HarmonicSourceSpec`` entries become sums of partials with phases from
    their own seed; :class:`SpectralDensity` entries become Gaussian noise
    with that spectrum, drawn from a per-source child of ``seed``.
    """
    t_len = int(round(duration * fs))
    if t_len < 1:
        raise ValueError("duration too short")
    rngs = _spawn(seed, len(specs))
    out = np.empty((len(specs), t_len))
    t = np.arange(t_len) / fs
    for i, (spec, rng) in enumerate(zip(specs, rngs)):
        if isinstance(spec, HarmonicSourceSpec):
            freqs, amps = spec.partials(fs)
            phases = np.random.default_rng(spec.seed).uniform(0, 2 * np.pi, freqs.size)
            sig = np.zeros(t_len)
            for f, a, ph in zip(freqs, amps, phases):
                sig += a * np.cos(2 * np.pi * f * t + ph)
            out[i] = sig
        elif isinstance(spec, SpectralDensity):
            if spec.sample_rate != fs:
                raise ValueError("spectrum sample rate does not match fs")
            out[i] = colored_noise(spec, t_len, rng)
        else:
            raise TypeError(f"unsupported source spec {type(spec).__name__}")
    return out


def windowed_autocorrelation(signal, fs: float = DEFAULT_FS,
                             window_length: float = 0.05) -> CorrelationSequence:
    """Frame-averaged autocorrelation with a von Hann analysis window.

    Frames of ``window_length`` seconds (50 % overlap) are Hann-windowed; the
    biased autocorrelations are averaged and divided by the window energy, so
    lag 0 estimates the signal power.  The result spans lags up to one frame.
    """
    x = np.asarray(signal, dtype=float)
    n = int(round(window_length * fs))
    if n < 2 or x.size < n:
        raise ValueError(f"signal of {x.size} samples shorter than {n}-sample window")
    w = scipy.signal.get_window("hann", n, fftbins=False)
    hop = n // 2
    starts = np.arange(0, x.size - n + 1, hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, n)[starts] * w
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.mean(np.abs(np.fft.rfft(frames, nfft, axis=1)) ** 2, axis=0)
    r = np.fft.irfft(spec, nfft) / np.sum(w * w)
    lags = np.arange(-(n - 1), n)
    vals = r[np.mod(lags, nfft)]
    vals = 0.5 * (vals + vals[::-1])
    return CorrelationSequence(vals, fs)


# ---------------------------------------------------------------------------
# Mixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mixture:
    """Rendered observations (M, T) and the undelayed desired signal ``d_0``."""

    x: np.ndarray
    d0: np.ndarray
    padding: int
    warmup: int = 0
    extras: dict = field(default_factory=dict)

    def desired(self, alpha_samples: int) -> np.ndarray:
        """``d_alpha[k] = d_0[k - alpha]`` (zero outside the rendered span)."""
        a = int(alpha_samples)
        out = np.zeros_like(self.d0)
        if a >= 0:
            out[a:] = self.d0[: self.d0.size - a]
        else:
            out[:a] = self.d0[-a:]
        return out


def render_mixture(scene: Scene, sources: np.ndarray, noise_seed: int = 0,
                   noise: bool = True) -> Mixture:
    """Convolve sources through the scene responses and add per-mic noise."""
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    if sources.shape[0] != scene.num_sources:
        raise ValueError(f"{sources.shape[0]} signals for {scene.num_sources} sources")
    if isinstance(scene.noise_spectra, np.ndarray):
        raise NotImplementedError("rendering needs per-mic (diagonal) noise spectra")
    t_len = sources.shape[1]
    h = scene.impulse_responses
    x = np.zeros((scene.num_mics, t_len))
    for m in range(scene.num_mics):
        for n in range(scene.num_sources):
            if np.any(h[m, n]):
                x[m] += scipy.signal.fftconvolve(sources[n], h[m, n])[:t_len]
    if noise:
        rngs = _spawn(noise_seed, scene.num_mics)
        for m, (spec, rng) in enumerate(zip(scene.noise_spectra, rngs)):
            if np.any(spec.values > 0):
                x[m] += colored_noise(spec, t_len, rng)
    t, ref = scene.target_source, scene.reference_mic
    d0 = scipy.signal.fftconvolve(sources[t], h[ref, t])[:t_len]
    return Mixture(x, d0, scene.padding, warmup=h.shape[-1])
