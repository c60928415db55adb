"""Spectra, correlation sequences and scenes.

Lag convention used throughout the package::

    r_ab[l] = E[a[n + l] b[n]]

so that ``R_ab(w) = sum_l r_ab[l] exp(-j w l)``.  With this convention an
observation ``x`` that is a delayed copy of ``d`` (``x[n] = d[n - k]``) has its
cross-correlation mass at the positive lag ``+k``, and
``r_ab[l] = r_ba[-l]``.

Power spectra are sampled on the full FFT grid ``w_k = 2 pi k / grid_size``,
``k = 0..grid_size-1``, and are normalized so that the lag-0 correlation is the
mean over bins (a Riemann sum of ``dw / 2 pi``).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_FS = 16000.0
DEFAULT_GRID_SIZE = 8192


class InvalidSpectrumError(ValueError):
    """Raised for negative or non-symmetric power spectra."""


class ConditioningError(np.linalg.LinAlgError):
    """Raised when a covariance that must be positive definite is not."""


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _lag_index(lag, grid_size: int):
    return np.mod(lag, grid_size)


@dataclass(frozen=True)
class SpectralDensity:
    """Nonnegative power spectrum of a real process on the full FFT grid."""

    values: np.ndarray
    sample_rate: float = DEFAULT_FS

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1 or self.values.size < 2:
            raise InvalidSpectrumError("values must be a 1-D array with >= 2 bins")

    @property
    def grid_size(self) -> int:
        return self.values.size

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.grid_size) * self.sample_rate / self.grid_size

    @property
    def power(self) -> float:
        return float(np.mean(self.values))

    def validate(self, rtol: float = 1e-9) -> None:
        v = self.values
        scale = max(float(np.max(np.abs(v))), np.finfo(float).tiny)
        if np.any(v < -rtol * scale):
            raise InvalidSpectrumError(f"negative spectrum value {v.min():.3e}")
        mirrored = np.roll(v[::-1], 1)
        if np.max(np.abs(v - mirrored)) > rtol * scale:
            raise InvalidSpectrumError("spectrum is not conjugate symmetric")

    def scaled(self, c: float) -> "SpectralDensity":
        return SpectralDensity(c * self.values, self.sample_rate)

    @classmethod
    def flat(cls, level: float, grid_size: int = DEFAULT_GRID_SIZE,
             sample_rate: float = DEFAULT_FS) -> "SpectralDensity":
        return cls(np.full(grid_size, float(level)), sample_rate)


@dataclass(frozen=True)
class CorrelationSequence:
    """Real two-sided lag sequence on ``[-max_lag, max_lag]``."""

    values: np.ndarray
    sample_rate: float = DEFAULT_FS

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1 or self.values.size % 2 != 1:
            raise ValueError("correlation values must be 1-D with odd length")

    @property
    def max_lag(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.max_lag, self.max_lag + 1)

    def __getitem__(self, lag):
        lag = np.asarray(lag)
        if np.any(np.abs(lag) > self.max_lag):
            raise IndexError(f"lag outside [-{self.max_lag}, {self.max_lag}]")
        return self.values[lag + self.max_lag]

    def is_autocorrelation(self, tol: float = 1e-9) -> bool:
        v = self.values
        scale = max(abs(v[self.max_lag]), np.finfo(float).tiny)
        symmetric = np.max(np.abs(v - v[::-1])) <= tol * scale
        peak = np.all(np.abs(v) <= v[self.max_lag] * (1 + tol) + tol * scale)
        return bool(symmetric and peak)


def psd_to_autocorr(psd: SpectralDensity, max_lag: int) -> CorrelationSequence:
    """Inverse-transform a power spectrum into lags ``[-max_lag, max_lag]``.

    ``max_lag`` may reach ``grid_size / 2``; that lag is its own alias and
    appears at both ends of the sequence.
    """
    if not 0 <= max_lag <= psd.grid_size / 2:
        raise ValueError(f"max_lag must be in [0, {psd.grid_size // 2}]")
    psd.validate()
    r = np.fft.ifft(psd.values).real
    lags = np.arange(-max_lag, max_lag + 1)
    return CorrelationSequence(r[_lag_index(lags, psd.grid_size)], psd.sample_rate)


def autocorr_to_psd(r: CorrelationSequence, grid_size: int = DEFAULT_GRID_SIZE,
                    clip: bool = True) -> SpectralDensity:
    """Forward-transform an autocorrelation onto the FFT grid.

    Tiny negative values from roundoff are clipped to zero when ``clip``.
    """
    if 2 * r.max_lag > grid_size:
        raise ValueError("grid_size too small for the lag support")
    weights = np.ones(r.values.size)
    if 2 * r.max_lag == grid_size:
        weights[[0, -1]] = 0.5  # lags -G/2 and G/2 share one bin
    buf = np.zeros(grid_size)
    np.add.at(buf, _lag_index(r.lags, grid_size), weights * r.values)
    values = np.fft.fft(buf).real
    if clip:
        values = np.maximum(values, 0.0)
    return SpectralDensity(values, r.sample_rate)


@dataclass(frozen=True)
class Scene:
    """Sources, mixing responses and noise for an ``M``-mic, ``N``-source array.

    Parameters
    ----------
    source_spectra : sequence of SpectralDensity
        One power spectrum per source; sources are mutually uncorrelated.
    impulse_responses : array_like, shape (M, N, K)
        Causal mixing responses ``a[m, n]`` in samples.
    noise_spectra : sequence of SpectralDensity, or array of shape (M, M, G)
        Per-mic noise spectra (spatially white), or a full cross-spectral
        matrix on the grid.
    padding : int
        Common front padding (samples) already contained in every response.
        Recorded for bookkeeping; it cancels out of all delay-error curves
        because the desired signal is built from the padded ``a[ref, target]``.
    """

    source_spectra: tuple
    impulse_responses: np.ndarray
    noise_spectra: object
    reference_mic: int = 0
    target_source: int = 0
    padding: int = 0
    label: str = ""
    _spectral_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        spectra = tuple(self.source_spectra)
        if not spectra:
            raise ValueError("scene needs at least one source")
        object.__setattr__(self, "source_spectra", spectra)
        h = np.asarray(self.impulse_responses, dtype=float)
        if h.ndim == 2:
            h = h[:, :, None]
        if h.ndim != 3:
            raise ValueError("impulse_responses must have shape (M, N, K)")
        object.__setattr__(self, "impulse_responses", _frozen(h))
        m, n, k = h.shape
        if n != len(spectra):
            raise ValueError(f"{n} mixing columns but {len(spectra)} source spectra")
        grid = spectra[0].grid_size
        fs = spectra[0].sample_rate
        for s in spectra:
            if s.grid_size != grid or s.sample_rate != fs:
                raise ValueError("all spectra must share grid_size and sample_rate")
            s.validate()
        if k > grid // 2:
            raise ValueError(f"impulse responses ({k} taps) too long for grid {grid}")
        noise = self.noise_spectra
        if isinstance(noise, np.ndarray) and noise.ndim == 3:
            if noise.shape != (m, m, grid):
                raise ValueError(f"noise matrix must have shape {(m, m, grid)}")
            object.__setattr__(self, "noise_spectra", _frozen(noise, complex))
        else:
            noise = tuple(noise)
            if len(noise) != m:
                raise ValueError(f"{len(noise)} noise spectra for {m} mics")
            for s in noise:
                if s.grid_size != grid or s.sample_rate != fs:
                    raise ValueError("noise spectra must share the scene grid")
                s.validate()
            object.__setattr__(self, "noise_spectra", noise)
        if not 0 <= self.reference_mic < m:
            raise ValueError("reference_mic out of range")
        if not 0 <= self.target_source < n:
            raise ValueError("target_source out of range")

    @property
    def num_mics(self) -> int:
        return self.impulse_responses.shape[0]

    @property
    def num_sources(self) -> int:
        return self.impulse_responses.shape[1]

    @property
    def grid_size(self) -> int:
        return self.source_spectra[0].grid_size

    @property
    def sample_rate(self) -> float:
        return self.source_spectra[0].sample_rate

    def _spectral(self):
        cache = self._spectral_cache
        if "rx" not in cache:
            g = self.grid_size
            a = np.fft.fft(self.impulse_responses, n=g, axis=-1)  # (M, N, G)
            rs = np.stack([s.values for s in self.source_spectra])  # (N, G)
            rx = np.einsum("ink,nk,jnk->ijk", a, rs, a.conj())
            noise = self.noise_spectra
            if isinstance(noise, np.ndarray):
                rx = rx + noise
            else:
                for i, s in enumerate(noise):
                    rx[i, i] += s.values
            t, ref = self.target_source, self.reference_mic
            rxd = a[:, t, :] * rs[t] * a[ref, t, :].conj()
            rd = (np.abs(a[ref, t, :]) ** 2) * rs[t]
            cache.update(a=a, rx=rx, rxd=rxd, rd=rd)
        return cache

    def observation_spectrum(self) -> np.ndarray:
        """``R_x(w)`` as an (M, M, G) Hermitian array."""
        return self._spectral()["rx"]

    def cross_spectrum(self) -> np.ndarray:
        """``R_xd(w)``: cross spectrum of the mics with the undelayed target, (M, G)."""
        return self._spectral()["rxd"]

    def desired_spectrum(self) -> np.ndarray:
        return self._spectral()["rd"]

    @property
    def target_power(self) -> float:
        """``r_d(0)``, the power of the target as captured at the reference mic."""
        return float(np.mean(self.desired_spectrum()))

    def digest(self) -> str:
        h = hashlib.sha256()
        for s in self.source_spectra:
            h.update(np.ascontiguousarray(s.values).tobytes())
        h.update(np.ascontiguousarray(self.impulse_responses).tobytes())
        noise = self.noise_spectra
        if isinstance(noise, np.ndarray):
            h.update(np.ascontiguousarray(noise).tobytes())
        else:
            for s in noise:
                h.update(np.ascontiguousarray(s.values).tobytes())
        h.update(repr((self.reference_mic, self.target_source, self.padding,
                       self.sample_rate)).encode())
        return h.hexdigest()[:12]


@dataclass(frozen=True)
class MixtureCorrelations:
    """Observation correlations ``r_x[i, j, l]`` and cross vector ``r_xd[i, l]``.

    Both arrays are indexed by lag ``l + max_lag`` on the last axis.
    """

    rx: np.ndarray
    rxd: np.ndarray
    rd0: float
    max_lag: int
    sample_rate: float

    def pair(self, i: int, j: int) -> CorrelationSequence:
        return CorrelationSequence(self.rx[i, j], self.sample_rate)

    def cross(self, i: int) -> CorrelationSequence:
        return CorrelationSequence(self.rxd[i], self.sample_rate)


def assemble_mixture_correlations(scene: Scene, max_lag: int) -> MixtureCorrelations:
    """Correlations of the observed mixture up to ``max_lag``.

    Entry ``(i, j)`` is ``r_{x_i x_j}[l] = sum_n (a_in * a_jn(-.) * r_sn)[l]
    + r_{z,ij}[l]``; the cross vector is ``r_{x_i d_0}[l]`` with ``d_0`` the
    target source as captured at the reference mic.
    """
    g = scene.grid_size
    k = scene.impulse_responses.shape[-1]
    if max_lag + k > g // 2:
        raise ValueError(
            f"max_lag={max_lag} with {k}-tap responses exceeds grid {g} support")
    lags = _lag_index(np.arange(-max_lag, max_lag + 1), g)
    rx = np.fft.ifft(scene.observation_spectrum(), axis=-1)
    rxd = np.fft.ifft(scene.cross_spectrum(), axis=-1)
    rx = rx.real[..., lags]
    rxd = rxd.real[..., lags]
    return MixtureCorrelations(_frozen(rx), _frozen(rxd), scene.target_power,
                               max_lag, scene.sample_rate)


METHODS = ("analytic-ula", "analytic-two-source", "scalar-causal", "fir-cmwf",
           "spectral-factor")


@dataclass(frozen=True)
class DelayErrorCurve:
    """MSE as a function of processing delay.

    ``alphas`` are in seconds; ``mse_db`` is relative to ``target_power``.
    """

    alphas: np.ndarray
    mse_linear: np.ndarray
    method: str
    target_power: float = 1.0
    scene_digest: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        a = _frozen(self.alphas)
        e = _frozen(self.mse_linear)
        if a.shape != e.shape or a.ndim != 1:
            raise ValueError("alphas and mse_linear must be 1-D and equal length")
        if a.size > 1 and np.any(np.diff(a) <= 0):
            raise ValueError("alphas must be strictly increasing")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "mse_linear", e)

    @property
    def mse_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.mse_linear / self.target_power)

    @property
    def alphas_ms(self) -> np.ndarray:
        return 1e3 * self.alphas

    def entries(self) -> list[tuple[float, float, float]]:
        return list(zip(self.alphas.tolist(), self.mse_linear.tolist(),
                        self.mse_db.tolist()))

    def __len__(self) -> int:
        return self.alphas.size


def stack_spectra(spectra: Sequence[SpectralDensity]) -> np.ndarray:
    return np.stack([s.values for s in spectra])
