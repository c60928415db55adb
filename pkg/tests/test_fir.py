import numpy as np
import pytest
import scipy.signal
from hypothesis import given, strategies as st

from causalmwf.analytic import UlaScenario, noncausal_mse, ula_delay_error
from causalmwf.correlation import ConditioningError, Scene, SpectralDensity
from causalmwf.fir import (
    MultichannelFirFilter,
    build_block_correlation,
    build_cross_correlation,
    delay_sweep,
    design_filter,
    model_mse,
    sample_relative_mse,
)
from causalmwf.synthesis import two_source_scene, ula_scene

from helpers import db

FS = 16000.0


def _flat(level=1.0, g=1024):
    return SpectralDensity.flat(level, g, FS)


def identity_scene(noise=0.0):
    return Scene((_flat(),), np.ones((1, 1, 1)), (_flat(noise),))


def delay_pair_scene(k, noise=(0.0, 0.0)):
    """Mic 1 hears the source directly, mic 2 ``k`` samples later."""
    h = np.zeros((2, 1, k + 1))
    h[0, 0, 0] = 1.0
    h[1, 0, k] = 1.0
    return Scene((_flat(),), h, (_flat(noise[0]), _flat(noise[1])))


def test_identity_block_matrix():
    np.testing.assert_allclose(build_block_correlation(identity_scene(), 3).matrix,
                               np.eye(3), atol=1e-12)


def test_pure_delay_blocks():
    k = 3
    b = build_block_correlation(delay_pair_scene(k), k + 1).matrix
    L = k + 1
    off = b[:L, L:]  # E[x1[n - l1] x2[n - l2]], nonzero where l1 = l2 + k
    expected = np.zeros((L, L))
    expected[k, 0] = 1.0  # x1[n - k] = x2[n]
    np.testing.assert_allclose(off, expected, atol=1e-12)
    np.testing.assert_allclose(b[L:, :L], expected.T, atol=1e-12)
    np.testing.assert_allclose(b[:L, :L], np.eye(L), atol=1e-12)


def test_block_matrix_matches_sample_covariance(rng):
    m, n, k, L = 2, 2, 5, 4
    h = rng.normal(size=(m, n, k))
    scene = Scene((_flat(), _flat()), h, (_flat(0.2), _flat(0.2)))
    model = build_block_correlation(scene, L).matrix
    t = 1_000_000
    s = rng.standard_normal((n, t + k))
    x = np.zeros((m, t))
    for i in range(m):
        for j in range(n):
            x[i] += scipy.signal.lfilter(h[i, j], [1.0], s[j])[k:]
        x[i] += np.sqrt(0.2) * rng.standard_normal(t)
    # stacked vector: channel-major, tap l holds x[n - l]
    stacked = np.concatenate([
        np.stack([x[i, L - 1 - l: t - l] for l in range(L)]) for i in range(m)])
    sample = stacked @ stacked.T / stacked.shape[1]
    rel = np.linalg.norm(sample - model) / np.linalg.norm(model)
    assert rel < 0.02


def test_cross_vector_examples():
    np.testing.assert_allclose(build_cross_correlation(identity_scene(), 1, 0), [1.0],
                               atol=1e-12)
    p = build_cross_correlation(identity_scene(), 6, 2)
    np.testing.assert_allclose(p, np.eye(1, 6, 2)[0], atol=1e-12)


def test_design_identity_with_loading():
    f = design_filter(identity_scene(), 5, 0, loading=1e-6)
    assert abs(f.coefficients[0, 0] - 1 / (1 + 1e-6)) < 1e-9
    assert np.max(np.abs(f.coefficients[0, 1:])) < 1e-9


def test_design_pure_delay_filter():
    f = design_filter(identity_scene(), 8, 3, loading=1e-12)
    np.testing.assert_allclose(f.coefficients[0], np.eye(1, 8, 3)[0], atol=1e-9)


def test_lag_convention_self_check():
    """Mic 2 leads the reference by k samples and is noise free.

    The causal optimum at alpha = 0 is a k-tap delay on mic 2.  With the
    opposite lag convention the solve would need tap -k and could not
    produce a pure delay.
    """
    k = 4
    h = np.zeros((2, 1, k + 1))
    h[0, 0, k] = 1.0  # reference mic hears the source last
    h[1, 0, 0] = 1.0
    scene = Scene((_flat(),), h, (_flat(1.0), _flat(0.0)))
    f = design_filter(scene, 10, 0, loading=1e-10)
    np.testing.assert_allclose(f.coefficients[1], np.eye(1, 10, k)[0], atol=1e-6)
    np.testing.assert_allclose(f.coefficients[0], 0.0, atol=1e-6)
    assert model_mse(scene, f) < 1e-8


def test_model_mse_zero_filter():
    scene = ula_scene(3, 0.5e-3, 0.1)
    zero = MultichannelFirFilter(np.zeros((3, 16)), 0, 1.0)
    assert model_mse(scene, zero) == pytest.approx(scene.target_power, rel=1e-12)


def test_model_mse_perfect_reconstruction():
    scene = identity_scene(noise=0.0)
    f = design_filter(scene, 4, 0, loading=1e-12)
    assert model_mse(scene, f) < 1e-10


def test_model_mse_dimension_check():
    with pytest.raises(ValueError):
        model_mse(ula_scene(3, 0.5e-3, 0.1), MultichannelFirFilter(np.zeros((2, 4)), 0, 1.0))


def test_large_alpha_reaches_noncausal_floor():
    scene = two_source_scene(5.0, -3.0, 0.01, fs=1.0, grid_size=8192)
    f = design_filter(scene, 400, 200, loading=1e-10)
    assert db(model_mse(scene, f)) - db(noncausal_mse(scene)) < 0.01


def test_ula_plateau_centres():
    s = UlaScenario(4, 0.5e-3, 0.01)
    scene = ula_scene(4, s.tau, s.sigma2, fs=FS)
    centres = np.array([-0.5, 0.25, 0.75, 1.25, 2.5]) * 1e-3
    curve = delay_sweep(scene, 256, centres)
    expected = [ula_delay_error(s, a) for a in centres]
    assert np.max(np.abs(curve.mse_db - db(expected))) < 0.2


def test_ula_sweep_has_one_step_per_mic():
    scene = ula_scene(4, 8.0, 0.01, fs=1.0, grid_size=4096)
    curve = delay_sweep(scene, 128, np.arange(-6, 40), in_samples=True)
    drops = -np.diff(curve.mse_db)
    assert np.sum(drops > 0.5) == 4


def test_identity_sweep_is_flat():
    scene = identity_scene(noise=0.0)
    loading = 1e-6
    curve = delay_sweep(scene, 16, np.arange(0, 11), loading=loading, in_samples=True)
    floor = (loading / (1 + loading)) ** 2  # (1 - w)^2 with w = 1 / (1 + loading)
    np.testing.assert_allclose(curve.mse_linear, curve.mse_linear[0], rtol=1e-9)
    assert curve.mse_linear[0] == pytest.approx(floor, rel=1e-6)


def test_sweep_is_independent_of_workers():
    scene = ula_scene(3, 0.3e-3, 0.05)
    alphas = np.arange(-4, 30)
    a = delay_sweep(scene, 64, alphas, in_samples=True)
    b = delay_sweep(scene, 64, alphas, in_samples=True, workers=4)
    np.testing.assert_array_equal(a.mse_linear, b.mse_linear)


def test_sweep_matches_single_designs():
    scene = ula_scene(3, 0.3e-3, 0.05)
    res = delay_sweep(scene, 32, [-2, 3, 9], in_samples=True, keep_filters=True)
    for f, e in zip(res.filters, res.curve.mse_linear):
        g = design_filter(scene, 32, f.alpha_samples)
        np.testing.assert_allclose(g.coefficients, f.coefficients, rtol=1e-9, atol=1e-12)
        assert model_mse(scene, g) == pytest.approx(e, rel=1e-9)


def test_conditioning_error_reports_size():
    h = np.ones((2, 1, 1))
    scene = Scene((_flat(),), h, (_flat(0.0), _flat(0.0)))  # rank one
    from causalmwf.fir import _cholesky

    with pytest.raises(ConditioningError, match="8x8"):
        _cholesky(-build_block_correlation(scene, 4).matrix, 1e-12)


def test_sample_relative_mse_cases(rng):
    d = rng.normal(size=1000)
    assert sample_relative_mse(d, d) == -200.0
    assert sample_relative_mse(np.zeros_like(d), d) == pytest.approx(0.0, abs=1e-12)
    assert sample_relative_mse(0.5 * d, d) == pytest.approx(-6.0206, abs=1e-4)
    with pytest.raises(ValueError):
        sample_relative_mse(d[:10], d)


@given(st.floats(1e-3, 1.0), st.integers(0, 2**31))
def test_sweep_monotone_and_bounded(sigma2, seed):
    rng = np.random.default_rng(seed)
    tdoas = rng.uniform(-6, 6, size=(3, 2)).round()
    tdoas[0] = 0.0
    from causalmwf.synthesis import plane_wave_scene

    scene = plane_wave_scene(tdoas, 1.0, sigma2, fs=1.0, grid_size=2048)
    curve = delay_sweep(scene, 96, np.arange(-10, 30), loading=1e-9, in_samples=True)
    assert np.all(np.diff(curve.mse_db) <= 0.05)
    assert np.all(curve.mse_linear <= scene.target_power * (1 + 1e-9))
    assert np.all(curve.mse_linear >= noncausal_mse(scene) * (1 - 1e-6))
