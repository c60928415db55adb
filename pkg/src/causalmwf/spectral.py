"""Minimum-phase factors and causality penalties.

The penalty sequence ``r_tilde`` is the inverse transform of
``R_xd^H (G^H)^{-1}`` where ``R_x = G G^H`` with ``G`` and ``G^{-1}`` causal.
The MSE of the best causal estimate of the target delayed by ``alpha``
samples is the noncausal floor plus the energy of ``r_tilde`` at lags below
``-alpha``.  Energies are in per-sample units (unit lag spacing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import UlaScenario, noncausal_mse
from .correlation import DelayErrorCurve, Scene, SpectralDensity

DEFAULT_FLOOR_DB = -120.0


class DegenerateSpectrumError(ValueError):
    pass


class NonCausalFactorError(ValueError):
    pass


@dataclass(frozen=True)
class MinimumPhaseFactor:
    """``G(w)`` on the FFT grid with ``|G|^2 = psd`` and its causal impulse response."""

    spectrum: np.ndarray
    impulse_response: np.ndarray
    cepstrum: np.ndarray
    sample_rate: float

    @property
    def grid_size(self) -> int:
        return self.spectrum.size


def _fold_cepstrum(c: np.ndarray) -> np.ndarray:
    n = c.size
    out = np.zeros_like(c)
    out[0] = c[0]
    out[1:(n + 1) // 2] = 2 * c[1:(n + 1) // 2]
    if n % 2 == 0:
        out[n // 2] = c[n // 2]
    return out


def scalar_spectral_factor(psd: SpectralDensity,
                           floor_db: float = DEFAULT_FLOOR_DB) -> MinimumPhaseFactor:
    """Cepstral minimum-phase factor of ``max(psd, peak * 10^(floor_db/10))``."""
    v = np.asarray(psd.values, dtype=float)
    peak = float(np.max(v))
    if not peak > 0:
        raise DegenerateSpectrumError("spectrum is identically zero")
    clipped = np.maximum(v, peak * 10 ** (floor_db / 10))
    cep = _fold_cepstrum(np.fft.ifft(0.5 * np.log(clipped)).real)
    spectrum = np.exp(np.fft.fft(cep))
    h = np.fft.ifft(spectrum).real
    for a in (spectrum, h, cep):
        a.setflags(write=False)
    return MinimumPhaseFactor(spectrum, h, cep, psd.sample_rate)


@dataclass(frozen=True)
class PenaltySequence:
    """Two-sided (possibly multichannel) sequence; column ``origin`` is lag 0."""

    values: np.ndarray  # (C, T)
    origin: int
    sample_rate: float

    def __post_init__(self):
        v = np.atleast_2d(np.array(self.values, dtype=float))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not 0 <= self.origin < v.shape[1]:
            raise ValueError("origin outside the sequence")

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.values.shape[1]) - self.origin

    @property
    def lag_energy(self) -> np.ndarray:
        return np.sum(self.values ** 2, axis=0)

    @property
    def total_energy(self) -> float:
        return float(np.sum(self.values ** 2))

    def energy_before(self, alpha_samples) -> np.ndarray:
        """Energy at lags ``t < -alpha`` for each requested delay."""
        alpha = np.atleast_1d(np.asarray(alpha_samples, dtype=float))
        e = self.lag_energy
        cum = np.concatenate([[0.0], np.cumsum(e)])
        # number of lags strictly below -alpha
        count = np.searchsorted(self.lags, -alpha, side="left")
        return cum[count]

    @classmethod
    def from_grid(cls, values: np.ndarray, sample_rate: float) -> "PenaltySequence":
        """Reorder a wrapped FFT-grid sequence to lags ``-G/2 .. G/2 - 1``."""
        values = np.atleast_2d(values)
        g = values.shape[1]
        return cls(np.roll(values, g // 2, axis=1), g // 2, sample_rate)


def penalty_curve(penalty: PenaltySequence, floor: float, alphas_samples,
                  target_power: float = 1.0, method: str = "scalar-causal",
                  digest: str = "") -> DelayErrorCurve:
    a = np.asarray(alphas_samples, dtype=float)
    mse = floor + penalty.energy_before(a)
    return DelayErrorCurve(a / penalty.sample_rate, mse, method, target_power, digest)


def _as_cross(cross, grid_size: int) -> np.ndarray:
    if isinstance(cross, SpectralDensity):
        return cross.values.astype(complex)
    cross = np.asarray(cross)
    if cross.shape != (grid_size,):
        raise ValueError("cross spectrum must be on the same grid")
    return cross.astype(complex)


def scalar_penalty(observation_psd: SpectralDensity, cross_psd,
                   floor_db: float = DEFAULT_FLOOR_DB) -> PenaltySequence:
    g = scalar_spectral_factor(observation_psd, floor_db)
    rxd = _as_cross(cross_psd, g.grid_size)
    rt = np.fft.ifft(np.conj(rxd) / np.conj(g.spectrum))
    return PenaltySequence.from_grid(rt.real, observation_psd.sample_rate)


def scalar_causal_delay_error(signal_psd: SpectralDensity,
                              observation_psd: SpectralDensity, cross_psd, alphas,
                              *, in_samples: bool = False,
                              floor_db: float = DEFAULT_FLOOR_DB) -> DelayErrorCurve:
    """Single-channel causal Wiener delay-error curve.

    ``signal_psd`` is the desired-signal spectrum ``R_d``, ``observation_psd``
    is ``R_x`` and ``cross_psd`` is ``R_xd`` (real spectrum or complex array
    on the same grid).  ``alphas`` are seconds unless ``in_samples``.
    """
    rd = signal_psd.values
    rx = observation_psd.values
    rxd = _as_cross(cross_psd, rx.size)
    scale = float(np.max(rd * rx)) or 1.0
    if np.any(np.abs(rxd) ** 2 > rd * rx + 1e-9 * scale):
        raise ValueError("cross spectrum exceeds sqrt(R_d R_x): inconsistent spectra")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rx > 0, np.abs(rxd) ** 2 / rx, 0.0)
    floor = float(np.mean(rd - ratio))
    penalty = scalar_penalty(observation_psd, rxd, floor_db)
    fs = observation_psd.sample_rate
    a = np.asarray(alphas, dtype=float)
    samples = a if in_samples else np.rint(a * fs)
    return penalty_curve(penalty, floor, samples, float(np.mean(rd)))


def scene_scalar_curve(scene: Scene, alphas, **kwargs) -> DelayErrorCurve:
    """:func:`scalar_causal_delay_error` for a single-mic scene."""
    if scene.num_mics != 1:
        raise ValueError("scalar curves need a single-mic scene")
    fs = scene.sample_rate
    rx = SpectralDensity(scene.observation_spectrum()[0, 0].real, fs)
    rd = SpectralDensity(scene.desired_spectrum(), fs)
    curve = scalar_causal_delay_error(rd, rx, scene.cross_spectrum()[0], alphas, **kwargs)
    return DelayErrorCurve(curve.alphas, curve.mse_linear, curve.method,
                           curve.target_power, scene.digest())


def _anticausal_fraction(seq: np.ndarray) -> float:
    """Energy share of the second half of a wrapped grid sequence."""
    g = seq.shape[-1]
    total = float(np.sum(np.abs(seq) ** 2))
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(seq[..., g // 2:]) ** 2)) / total


def triangular_penalty(scene: Scene, order=None, tol: float = 1e-8,
                       floor_db: float = DEFAULT_FLOOR_DB) -> PenaltySequence:
    """Multichannel penalty from a lower-triangular spectral factor.

    ``R_x = L D L^H`` per bin (unit lower-triangular ``L``), then
    ``G = L diag(h_i)`` with ``h_i`` the minimum-phase factor of ``D_i``.
    This is a valid causal factorization only when ``L`` and ``L^{-1}`` are
    causal for the chosen channel ``order`` (true for plane waves that reach
    the channels in order, e.g. a ULA or two same-side sources); otherwise
    :class:`NonCausalFactorError` is raised.  With ``order=None`` the
    identity and reversed orders are tried.
    """
    m = scene.num_mics
    if order is None:
        errors = []
        for cand in (list(range(m)), list(range(m))[::-1]):
            try:
                return triangular_penalty(scene, cand, tol, floor_db)
            except NonCausalFactorError as exc:
                errors.append(str(exc))
        raise NonCausalFactorError("; ".join(errors))
    order = list(order)
    rx = np.moveaxis(scene.observation_spectrum(), -1, 0)[:, order][:, :, order]
    rxd = scene.cross_spectrum().T[:, order]
    chol = np.linalg.cholesky(rx)  # (G, M, M), real positive diagonal
    diag = np.real(np.einsum("gii->gi", chol))
    lower = chol / diag[:, None, :]
    lt = np.fft.ifft(lower, axis=0)
    linv_t = np.fft.ifft(np.linalg.inv(lower), axis=0)
    frac = max(_anticausal_fraction(np.moveaxis(lt, 0, -1)),
               _anticausal_fraction(np.moveaxis(linv_t, 0, -1)))
    if frac > tol:
        raise NonCausalFactorError(
            f"triangular factor for channel order {order} is not causal "
            f"(anticausal energy fraction {frac:.2e})")
    fs = scene.sample_rate
    h = np.stack([scalar_spectral_factor(SpectralDensity(diag[:, i] ** 2, fs),
                                         floor_db).spectrum for i in range(m)], axis=1)
    factor = lower * h[:, None, :]
    rtilde = np.linalg.solve(factor, rxd[..., None])[..., 0]  # G^{-1} R_xd
    rt = np.fft.ifft(np.conj(rtilde), axis=0).T.real
    return PenaltySequence.from_grid(rt, fs)


def scene_penalty_curve(scene: Scene, alphas_samples, order=None) -> DelayErrorCurve:
    """Delay-error curve of a scene via :func:`triangular_penalty`."""
    pen = triangular_penalty(scene, order)
    return penalty_curve(pen, noncausal_mse(scene), alphas_samples, scene.target_power,
                         "spectral-factor", scene.digest())


def ula_penalty(s: UlaScenario, fs: float) -> PenaltySequence:
    """Explicit ULA penalty: the ``k``-th mic reached holds ``b_k`` at lag ``-m tau``.

    ``tau * fs`` must be an integer.
    """
    k = s.tau * fs
    if abs(k - round(k)) > 1e-9:
        raise ValueError("ULA penalty needs a TDOA on the sample lattice")
    k = int(round(k))
    span = abs(k) * (s.num_mics - 1)
    vals = np.zeros((s.num_mics, 2 * span + 1))
    order = np.argsort(np.arange(s.num_mics) * k, kind="stable")
    for m, b in zip(order, s.b()):
        vals[m, span - m * k] = b
    return PenaltySequence(vals, span, fs)


def shape_penalty(base: PenaltySequence, common_factor) -> PenaltySequence:
    """Convolve every channel of ``base`` with a causal common factor ``h``.

    ``common_factor`` is a :class:`MinimumPhaseFactor` or a 1-D causal
    impulse response starting at lag 0.
    """
    if isinstance(common_factor, MinimumPhaseFactor):
        if _anticausal_fraction(common_factor.impulse_response) > 1e-6:
            raise NonCausalFactorError("common factor has anticausal energy")
        h = np.asarray(common_factor.impulse_response)
        keep = np.nonzero(np.abs(h) > 1e-15 * np.max(np.abs(h)))[0]
        h = h[: keep[-1] + 1]
    else:
        h = np.asarray(common_factor, dtype=float)
        if h.ndim != 1 or h.size == 0:
            raise NonCausalFactorError("common factor must be a causal 1-D response")
    v = base.values
    out = np.zeros((v.shape[0], v.shape[1] + h.size - 1))
    for c in range(v.shape[0]):
        out[c] = np.convolve(v[c], h)
    return PenaltySequence(out, base.origin, base.sample_rate)
