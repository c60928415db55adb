import numpy as np
import pytest
import scipy.signal
from hypothesis import given, strategies as st

from causalmwf.correlation import Scene, SpectralDensity, assemble_mixture_correlations
from causalmwf.synthesis import (
    VOWEL_PRESETS,
    HarmonicSourceSpec,
    PlaneWaveArraySpec,
    azimuth,
    delay_responses,
    fractional_delay_fir,
    plane_wave_scene,
    render_mixture,
    render_sources,
    speech_shaped_psd,
    two_source_scene,
    windowed_autocorrelation,
)

FS = 16000.0


# -- fractional delays ---------------------------------------------------------


@pytest.mark.parametrize("k", [0, 1, 7, 40])
def test_integer_delay_is_exact_impulse(k):
    h = fractional_delay_fir(k / FS, FS, 64)
    assert h[k + 32] == 1.0
    assert np.count_nonzero(h) == 1


def test_half_sample_twice_is_one_sample():
    h = fractional_delay_fir(0.5 / FS, FS, 64)
    centre = 32.5
    n = np.arange(h.size)
    nz = np.abs(n - centre) < 32
    np.testing.assert_allclose(h[nz], h[nz][::-1], atol=1e-15)  # symmetric about 32.5
    # self-convolution against a one-sample delay, compared in |f| < 0.4 fs
    nfft = 4096
    hh = np.fft.fft(h, nfft) ** 2
    f = np.fft.fftfreq(nfft)
    ref = np.exp(-2j * np.pi * f * 65)
    band = np.abs(f) < 0.4
    err = np.sqrt(np.sum(np.abs(hh - ref)[band] ** 2) / nfft)
    assert err < 1e-3


def test_delay_then_advance_is_padding():
    tau = 2.3 / FS
    a = fractional_delay_fir(tau, FS, 64, padding=40)
    b = fractional_delay_fir(-tau, FS, 64, padding=40)
    nfft = 4096
    f = np.fft.fftfreq(nfft)
    err = np.fft.fft(a, nfft) * np.fft.fft(b, nfft) - np.exp(-2j * np.pi * f * 80)
    band = np.abs(f) < 0.4
    assert np.sqrt(np.sum(np.abs(err[band]) ** 2) / nfft) < 1e-3


@given(st.floats(-8.0, 8.0))
def test_group_delay_and_ripple(delay):
    pad = 48
    h = fractional_delay_fir(delay / FS, FS, 64, padding=pad)
    w, resp = scipy.signal.freqz(h, worN=4096, fs=FS)
    band = (w > 0) & (w < 0.4 * FS)
    mag = 20 * np.log10(np.abs(resp[band]))
    assert np.ptp(mag) < 0.1
    phase = np.unwrap(np.angle(resp))
    gd = -np.gradient(phase, 2 * np.pi * w / FS)
    assert np.max(np.abs(gd[band] - (pad + delay))) < 0.01


def test_delay_needs_padding():
    with pytest.raises(ValueError):
        fractional_delay_fir(-3 / FS, FS, 64)


def test_plane_wave_tdoa_sign():
    # a source along +x reaches a mic at +x first: negative TDOA
    spec = PlaneWaveArraySpec(np.array([[0, 0, 0], [0.1, 0, 0]]), azimuth(0.0)[None])
    assert spec.tdoas()[1, 0] == pytest.approx(-0.1 / 343.0)
    broadside = PlaneWaveArraySpec(np.array([[0, 0, 0], [0.1, 0, 0]]), azimuth(90.0)[None])
    assert broadside.tdoas()[1, 0] == pytest.approx(0.0, abs=1e-15)


def _upsampled_peak(x, factor=512):
    """Peak location of a band-limited sequence by FFT zero-padding."""
    n = x.size
    spec = np.fft.fft(x)
    big = np.zeros(n * factor, complex)
    half = n // 2
    big[:half] = spec[:half]
    big[-half:] = spec[-half:]
    y = np.fft.ifft(big).real
    return np.argmax(y) / factor


def test_tdoas_recovered_after_padding():
    tdoas = np.array([[0.0, 0.0], [0.37e-3, -0.81e-3], [-0.2e-3, 1.13e-3]])
    irs, pad = delay_responses(tdoas, FS, 64)
    for n in range(tdoas.shape[1]):
        for m in range(tdoas.shape[0]):
            xc = np.correlate(np.pad(irs[m, n], 256), irs[0, n], mode="full")
            # zero lag sits at index len(ref) - 1 of the full correlation
            lag = _upsampled_peak(xc) - (irs.shape[-1] - 1) - 256
            assert lag == pytest.approx(tdoas[m, n] * FS, abs=0.01)


# -- sources -------------------------------------------------------------------


def test_render_is_deterministic():
    specs = [VOWEL_PRESETS[0], speech_shaped_psd(4096, FS)]
    a = render_sources(specs, 0.5, FS, seed=7)
    b = render_sources(specs, 0.5, FS, seed=7)
    c = render_sources(specs, 0.5, FS, seed=8)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[0], c[0])  # harmonic phases come from HarmonicSourceSpec.seed
    assert not np.array_equal(a[1], c[1])


def test_rendered_power():
    sig = render_sources([VOWEL_PRESETS[1], speech_shaped_psd(4096, FS, power=2.0)],
                         10.0, FS, seed=1)
    assert np.mean(sig[0] ** 2) == pytest.approx(1.0, rel=0.02)
    assert np.mean(sig[1] ** 2) == pytest.approx(2.0, rel=0.05)


@pytest.mark.parametrize("psd", [speech_shaped_psd(8192, FS),
                                 SpectralDensity(np.abs(1 - 0.6 * np.exp(
                                     -2j * np.pi * np.arange(8192) / 8192)) ** -2, FS)])
def test_stochastic_render_matches_psd(psd):
    x = render_sources([psd], 10.0, FS, seed=5)[0]
    f, p = scipy.signal.welch(x, FS, nperseg=2048)
    design = np.interp(f, np.arange(4097) * FS / 8192, psd.values[:4097]) / FS
    edges = 100 * 2 ** (np.arange(0, 19) / 3)
    for lo, hi in zip(edges[:-1], edges[1:]):
        band = (f >= lo) & (f < hi)
        # one-sided Welch density doubles the two-sided grid spectrum
        ratio = np.mean(p[band]) / (2 * np.mean(design[band]))
        assert abs(10 * np.log10(ratio)) < 1.0, (lo, hi)


def test_pure_tone_autocorrelation():
    spec = HarmonicSourceSpec(440.0, formants=(), power=1.0)
    # keep only the fundamental
    freqs, amps = spec.partials(FS)
    t = np.arange(int(FS)) / FS
    tone = amps[0] * np.cos(2 * np.pi * 440.0 * t)
    r = windowed_autocorrelation(tone, FS)
    lags = r.lags
    n = (r.values.size + 1) // 2
    w = scipy.signal.get_window("hann", n, fftbins=False)
    env = np.correlate(w, w, mode="full") / np.sum(w * w)
    expected = amps[0] ** 2 / 2 * np.cos(2 * np.pi * 440.0 * lags / FS) * env
    np.testing.assert_allclose(r.values, expected, atol=2e-3)
    assert np.all(np.abs(r.values) <= r[0] + 1e-12)


def test_white_noise_autocorrelation(rng):
    x = rng.standard_normal(int(10 * FS))
    r = windowed_autocorrelation(x, FS)
    off = np.abs(np.delete(r.values, r.max_lag)) / r[0]
    assert np.max(off) < 0.05


def test_speech_shaped_autocorrelation_roundtrip():
    psd = speech_shaped_psd(8192, FS)
    x = render_sources([psd], 10.0, FS, seed=3)[0]
    r = windowed_autocorrelation(x, FS, window_length=0.064)
    from causalmwf.correlation import autocorr_to_psd

    est = autocorr_to_psd(r, 8192).values
    f = np.arange(8192) * FS / 8192
    # third-octave bands from 100 Hz to 6 kHz
    edges = 100 * 2 ** (np.arange(0, 18) / 3)
    for lo, hi in zip(edges[:-1], edges[1:]):
        band = (f >= lo) & (f < hi)
        ratio = np.mean(est[band]) / np.mean(psd.values[band])
        assert abs(10 * np.log10(ratio)) < 1.5, (lo, hi)


def _overlap_db(pa, pb, band):
    """Shared energy ``sum min(Pa, Pb)`` relative to ``sum max(Pa, Pb)`` in ``band``."""
    shared = np.sum(np.minimum(pa[band], pb[band]))
    return 10 * np.log10(shared / np.sum(np.maximum(pa[band], pb[band])))


@pytest.mark.parametrize("i,j", [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
def test_vowel_presets_overlap_little_in_formant_bands(i, j):
    a, b = VOWEL_PRESETS[i], VOWEL_PRESETS[j]
    sig = render_sources([a, b], 10.0, FS)
    # one Hann segment over the full ten seconds: 0.1 Hz bins
    f, p = scipy.signal.periodogram(sig, FS, window="hann", axis=-1)
    for fc, bw in a.formants + b.formants:
        band = (f >= fc - bw) & (f <= fc + bw)
        assert _overlap_db(p[0], p[1], band) < -20, (fc, bw)


# -- mixtures ------------------------------------------------------------------


def test_identity_mixture(rng):
    s = rng.standard_normal((1, 1000))
    scene = Scene((SpectralDensity.flat(1.0, 1024, FS),), np.ones((1, 1, 1)),
                  (SpectralDensity.flat(0.0, 1024, FS),))
    mix = render_mixture(scene, s)
    np.testing.assert_array_equal(mix.x[0], s[0])
    np.testing.assert_array_equal(mix.d0, s[0])


def test_pure_delay_mixture(rng):
    s = rng.standard_normal((1, 500))
    scene = plane_wave_scene([[0.0], [3 / FS], [-2 / FS]], 1.0, 0.0)
    mix = render_mixture(scene, s, noise=False)
    p = scene.padding
    np.testing.assert_allclose(mix.x[0, p:], s[0, :500 - p], atol=1e-12)
    np.testing.assert_allclose(mix.x[1, p + 3:], s[0, :500 - p - 3], atol=1e-12)
    np.testing.assert_allclose(mix.x[2, p - 2:], s[0, :500 - p + 2], atol=1e-12)
    np.testing.assert_allclose(mix.desired(3)[3:], mix.d0[:-3])


def test_two_source_mixture_correlations():
    scene = two_source_scene(0.4e-3, -0.7e-3, 0.05, fs=FS, grid_size=4096)
    t = 1_000_000
    sources = render_sources(list(scene.source_spectra), t / FS, FS, seed=11)
    mix = render_mixture(scene, sources, noise_seed=12)
    w = mix.warmup
    x = mix.x[:, w:]
    model = assemble_mixture_correlations(scene, 8)
    for lag in (0, 3, -5):
        for i in range(2):
            for j in range(2):
                a = x[i, max(lag, 0): x.shape[1] + min(lag, 0)]
                b = x[j, max(-lag, 0): x.shape[1] - max(lag, 0)]
                sample = np.mean(a * b)
                assert abs(sample - model.rx[i, j, lag + 8]) < 0.02 * model.rx[i, i, 8]
