"""Finite-length causal multichannel Wiener filters.

Stacking order of the block vectors is channel-major: element ``i * L + l``
of ``x_bar[k]`` is ``x_i[k - l]``.  Hence

* ``R_bar[(i, l1), (j, l2)] = r_{x_i x_j}[l2 - l1]``
* ``p_bar(alpha)[(i, l)] = r_{x_i d_0}[alpha - l]``

where the desired output is ``d_alpha[k] = d_0[k - alpha]``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from .correlation import (
    ConditioningError,
    DelayErrorCurve,
    MixtureCorrelations,
    Scene,
    assemble_mixture_correlations,
)

DEFAULT_RELATIVE_LOADING = 1e-4
DB_FLOOR = -200.0


@dataclass(frozen=True)
class MultichannelFirFilter:
    coefficients: np.ndarray  # (M, L)
    alpha_samples: int
    loading: float

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[1] < 1:
            raise ValueError("coefficients must have shape (M, L) with L >= 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite filter coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def num_taps(self) -> int:
        return self.coefficients.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return self.coefficients.reshape(-1)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Causal filtering of an (M, T) signal block; output has length T."""
        x = np.atleast_2d(x)
        if x.shape[0] != self.coefficients.shape[0]:
            raise ValueError("channel count mismatch")
        t = x.shape[1]
        y = np.zeros(t)
        for w, xm in zip(self.coefficients, x):
            y += scipy.signal.fftconvolve(xm, w)[:t]
        return y


@dataclass(frozen=True)
class BlockCorrelationMatrix:
    """Symmetric block-Toeplitz covariance of the stacked observation vector."""

    matrix: np.ndarray
    num_mics: int
    num_taps: int

    def loaded(self, loading: float) -> np.ndarray:
        return self.matrix + loading * np.eye(self.matrix.shape[0])


def _correlations(scene: Scene, num_taps: int, extra: int = 0) -> MixtureCorrelations:
    max_lag = num_taps - 1 + extra
    try:
        return assemble_mixture_correlations(scene, max_lag)
    except ValueError as exc:
        raise ValueError(f"insufficient lag support for L={num_taps}: {exc}") from exc


def block_matrix_from_correlations(corr: MixtureCorrelations,
                                   num_taps: int) -> BlockCorrelationMatrix:
    m = corr.rx.shape[0]
    L = num_taps
    if L - 1 > corr.max_lag:
        raise ValueError(f"need lags up to {L - 1}, have {corr.max_lag}")
    c0 = corr.max_lag
    big = np.empty((m * L, m * L))
    for i in range(m):
        for j in range(m):
            r = corr.rx[i, j]
            col = r[c0 - np.arange(L)]  # entry (l1, 0) -> lag -l1
            row = r[c0 + np.arange(L)]  # entry (0, l2) -> lag l2
            big[i * L:(i + 1) * L, j * L:(j + 1) * L] = scipy.linalg.toeplitz(col, row)
    big = 0.5 * (big + big.T)
    big.setflags(write=False)
    return BlockCorrelationMatrix(big, m, L)


def build_block_correlation(scene: Scene, num_taps: int) -> BlockCorrelationMatrix:
    """Stacked covariance ``E[x_bar x_bar^T]`` for ``num_taps``-tap filters."""
    if num_taps < 1:
        raise ValueError("num_taps must be >= 1")
    return block_matrix_from_correlations(_correlations(scene, num_taps), num_taps)


def cross_from_correlations(corr: MixtureCorrelations, num_taps: int,
                            alpha_samples: int) -> np.ndarray:
    lags = alpha_samples - np.arange(num_taps)
    if np.max(np.abs(lags)) > corr.max_lag:
        raise ValueError(
            f"alpha={alpha_samples} samples needs lags in [{lags.min()}, {lags.max()}]"
            f" but support is +-{corr.max_lag}")
    return corr.rxd[:, lags + corr.max_lag].reshape(-1)


def build_cross_correlation(scene: Scene, num_taps: int, alpha_samples: int) -> np.ndarray:
    """Stacked cross-correlation ``E[x_bar[n] d_alpha[n]]``."""
    extra = max(0, abs(int(alpha_samples)) + 1)
    corr = _correlations(scene, num_taps, extra)
    return cross_from_correlations(corr, num_taps, int(alpha_samples))


def _cholesky(matrix: np.ndarray, loading: float):
    try:
        return scipy.linalg.cho_factor(matrix + loading * np.eye(matrix.shape[0]),
                                       lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(
            f"Cholesky failed for {matrix.shape[0]}x{matrix.shape[0]} block "
            f"correlation with loading={loading:g}") from exc


def default_loading(scene: Scene) -> float:
    return DEFAULT_RELATIVE_LOADING * scene.target_power


def design_filter(scene: Scene, num_taps: int, alpha_samples: int,
                  loading: float | None = None) -> MultichannelFirFilter:
    """Solve ``(R_bar + loading I) w = p_bar(alpha)`` for the stacked filter.

    ``loading`` defaults to ``1e-4`` times the target power.
    """
    if loading is None:
        loading = default_loading(scene)
    if loading <= 0:
        raise ValueError("loading must be positive")
    extra = abs(int(alpha_samples)) + 1
    corr = _correlations(scene, num_taps, extra)
    block = block_matrix_from_correlations(corr, num_taps)
    p = cross_from_correlations(corr, num_taps, int(alpha_samples))
    w = scipy.linalg.cho_solve(_cholesky(block.matrix, loading), p)
    return MultichannelFirFilter(w.reshape(scene.num_mics, num_taps),
                                 int(alpha_samples), float(loading))


def model_mse(scene: Scene, filt: MultichannelFirFilter) -> float:
    """``r_d(0) - 2 w^T p + w^T R w`` from the scene's model correlations."""
    if filt.coefficients.shape[0] != scene.num_mics:
        raise ValueError("filter channel count does not match the scene")
    L = filt.num_taps
    corr = _correlations(scene, L, abs(filt.alpha_samples) + 1)
    block = block_matrix_from_correlations(corr, L)
    p = cross_from_correlations(corr, L, filt.alpha_samples)
    return _quadratic_mse(corr.rd0, block.matrix, p, filt.stacked)


def _quadratic_mse(rd0: float, matrix: np.ndarray, p: np.ndarray, w: np.ndarray) -> float:
    return float(rd0 - 2 * w @ p + w @ (matrix @ w))


def sample_relative_mse(y, d, floor_db: float = DB_FLOOR) -> float:
    """``10 log10(sum (y - d)^2 / sum d^2)``; ``floor_db`` if the error is exactly 0."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    if y.shape != d.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {d.shape}")
    ref = float(np.sum(d * d))
    if ref <= 0:
        raise ValueError("reference signal has zero energy")
    err = float(np.sum((y - d) ** 2))
    if err == 0:
        return floor_db
    return 10 * np.log10(err / ref)


@dataclass(frozen=True)
class SweepResult:
    curve: DelayErrorCurve
    filters: tuple
    alpha_samples: np.ndarray


def delay_sweep(scene: Scene, num_taps: int, alphas, loading: float | None = None,
                *, in_samples: bool = False, keep_filters: bool = False,
                workers: int = 1):
    """Design one filter per delay and evaluate its model MSE.

    ``alphas`` are seconds unless ``in_samples``; they are rounded to the
    nearest sample.  The block matrix is factored once and shared by all
    solves, so results do not depend on evaluation order or ``workers``.
    Returns a :class:`DelayErrorCurve`, or a :class:`SweepResult` when
    ``keep_filters``.
    """
    fs = scene.sample_rate
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    samples = alphas.astype(int) if in_samples else np.rint(alphas * fs).astype(int)
    if np.any(np.diff(samples) <= 0):
        raise ValueError("delays must be strictly increasing after rounding to samples")
    if loading is None:
        loading = default_loading(scene)
    extra = int(np.max(np.abs(samples))) + 1
    corr = _correlations(scene, num_taps, extra)
    block = block_matrix_from_correlations(corr, num_taps)
    factor = _cholesky(block.matrix, loading)

    def solve(a):
        p = cross_from_correlations(corr, num_taps, int(a))
        w = scipy.linalg.cho_solve(factor, p)
        return w, _quadratic_mse(corr.rd0, block.matrix, p, w)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(solve, samples))
    else:
        results = [solve(a) for a in samples]
    mse = np.array([r[1] for r in results])
    curve = DelayErrorCurve(samples / fs, mse, "fir-cmwf", corr.rd0, scene.digest())
    if not keep_filters:
        return curve
    filters = tuple(
        MultichannelFirFilter(w.reshape(scene.num_mics, num_taps), int(a), float(loading))
        for (w, _), a in zip(results, samples))
    return SweepResult(curve, filters, samples)
