import numpy as np
import pytest
import scipy.signal
from hypothesis import given, strategies as st

from causalmwf import correlation as cor
from causalmwf.correlation import (
    CorrelationSequence,
    InvalidSpectrumError,
    Scene,
    SpectralDensity,
    assemble_mixture_correlations,
    autocorr_to_psd,
    psd_to_autocorr,
)
from causalmwf.synthesis import speech_shaped_psd

FS = 16000.0


def test_flat_spectrum_gives_unit_impulse():
    r = psd_to_autocorr(SpectralDensity.flat(1.0, 8192, FS), 50)
    expected = np.zeros(101)
    expected[50] = 1.0
    np.testing.assert_allclose(r.values, expected, atol=1e-12)


def test_single_bin_pair_gives_cosine():
    g, k = 1024, 37
    v = np.zeros(g)
    v[k] = v[g - k] = 0.5 * g
    r = psd_to_autocorr(SpectralDensity(v, FS), 200)
    lags = np.arange(-200, 201)
    np.testing.assert_allclose(r.values, np.cos(2 * np.pi * k * lags / g), atol=1e-12)


def test_speech_shaped_roundtrip():
    psd = speech_shaped_psd(8192, FS)
    r = psd_to_autocorr(psd, 4096)
    back = autocorr_to_psd(r, 8192)
    assert np.max(np.abs(back.values - psd.values)) < 1e-9


def test_power_is_lag_zero():
    psd = speech_shaped_psd(4096, FS, power=3.0)
    assert psd_to_autocorr(psd, 3)[0] == pytest.approx(3.0, rel=1e-12)
    assert psd.power == pytest.approx(3.0, rel=1e-12)


@given(st.integers(0, 2**31), st.floats(0.1, 10.0))
def test_autocorr_symmetric_and_scales(seed, c):
    rng = np.random.default_rng(seed)
    psd = SpectralDensity(np.exp(rng.normal(size=512)), FS)
    # symmetric spectrum on the full grid
    v = psd.values
    psd = SpectralDensity(0.5 * (v + np.roll(v[::-1], 1)), FS)
    r = psd_to_autocorr(psd, 40)
    np.testing.assert_allclose(r.values, r.values[::-1], atol=1e-12)
    assert np.all(np.abs(r.values) <= r[0] + 1e-12)
    r2 = psd_to_autocorr(psd.scaled(c), 40)
    np.testing.assert_allclose(r2.values, c * r.values, rtol=1e-10, atol=1e-12)


def test_negative_spectrum_rejected():
    v = np.ones(64)
    v[3] = v[61] = -0.5
    with pytest.raises(InvalidSpectrumError):
        SpectralDensity(v, FS).validate()


def test_asymmetric_spectrum_rejected():
    v = np.ones(64)
    v[3] = 2.0
    with pytest.raises(InvalidSpectrumError):
        SpectralDensity(v, FS).validate()


def test_correlation_sequence_needs_odd_length():
    with pytest.raises(ValueError):
        CorrelationSequence(np.ones(4), FS)


def test_autocorr_to_psd_rejects_long_support():
    r = CorrelationSequence(np.ones(201), FS)
    with pytest.raises(ValueError):
        autocorr_to_psd(r, 128)


def _white(level=1.0, g=1024):
    return SpectralDensity.flat(level, g, FS)


def test_identity_scene_assembly():
    m = 3
    h = np.zeros((m, m, 1))
    h[np.arange(m), np.arange(m), 0] = 1.0
    noise = tuple(_white(0.0) for _ in range(m))
    scene = Scene(tuple(_white() for _ in range(m)), h, noise)
    corr = assemble_mixture_correlations(scene, 4)
    for i in range(m):
        for j in range(m):
            expected = np.zeros(9)
            if i == j:
                expected[4] = 1.0
            np.testing.assert_allclose(corr.rx[i, j], expected, atol=1e-12)
    assert corr.rd0 == pytest.approx(1.0)


def test_pure_delay_lag_convention():
    # mic 2 hears the source k samples later: x2[n] = x1[n - k]
    k = 3
    h = np.zeros((2, 1, k + 1))
    h[0, 0, 0] = 1.0
    h[1, 0, k] = 1.0
    scene = Scene((_white(),), h, (_white(0.0), _white(0.0)))
    corr = assemble_mixture_correlations(scene, 6)
    lags = np.arange(-6, 7)
    # r_{x1 x2}[l] = E[x1[n + l] x2[n]] = delta[l + k]
    np.testing.assert_allclose(corr.rx[0, 1], (lags == -k).astype(float), atol=1e-12)
    np.testing.assert_allclose(corr.rx[1, 0], (lags == k).astype(float), atol=1e-12)
    # cross with d0 = x1: r_{x2 d0}[l] = delta[l - k]
    np.testing.assert_allclose(corr.rxd[1], (lags == k).astype(float), atol=1e-12)


def test_monte_carlo_lag_zero(rng):
    """Model lag-0 correlations against a long rendered mixture."""
    m, n, k = 2, 3, 6
    h = rng.normal(size=(m, n, k))
    sig = 0.1
    g = 1024
    scene = Scene(tuple(_white(1.0, g) for _ in range(n)), h,
                  tuple(_white(sig, g) for _ in range(m)))
    corr = assemble_mixture_correlations(scene, 2)
    t = 1_000_000
    s = rng.standard_normal((n, t + k))
    x = np.zeros((m, t))
    for i in range(m):
        for j in range(n):
            x[i] += scipy.signal.lfilter(h[i, j], [1.0], s[j])[k:]
        x[i] += np.sqrt(sig) * rng.standard_normal(t)
    sample = x @ x.T / t
    scale = np.sqrt(np.outer(np.diag(sample), np.diag(sample)))
    rel = np.abs(sample - corr.rx[:, :, 2]) / scale
    assert np.max(rel) < 0.01


def test_scene_rejects_mismatched_grid():
    with pytest.raises(ValueError):
        Scene((_white(1.0, 512),), np.ones((1, 1, 1)), (_white(1.0, 1024),))


def test_scene_rejects_long_responses():
    with pytest.raises(ValueError):
        Scene((_white(1.0, 64),), np.ones((1, 1, 40)), (_white(1.0, 64),))


def test_delay_error_curve_db_and_entries():
    curve = cor.DelayErrorCurve(np.array([0.0, 1e-3]), np.array([0.5, 0.25]),
                                "fir-cmwf", 2.0, "abc")
    np.testing.assert_allclose(curve.mse_db, 10 * np.log10([0.25, 0.125]))
    assert curve.entries()[1][0] == pytest.approx(1e-3)
    np.testing.assert_allclose(curve.alphas_ms, [0.0, 1.0])
