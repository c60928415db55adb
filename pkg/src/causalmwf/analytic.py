"""Closed-form delay-error curves for idealized anechoic scenes.

Both scenarios use white unit-power sources and spatially white noise of
power ``sigma2``; delays and TDOAs are in seconds and MSE values are relative
to the (unit) target power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .correlation import ConditioningError, DelayErrorCurve, Scene, SpectralDensity

# time comparisons are snapped to this resolution (seconds)
_EPS = 1e-12


def _u(t: float) -> float:
    """Strict unit step: 1 for t > 0."""
    return 1.0 if t > _EPS else 0.0


def _ubar(t: float) -> float:
    """Non-strict unit step: 1 for t >= 0."""
    return 1.0 if t >= -_EPS else 0.0


@dataclass(frozen=True)
class UlaScenario:
    num_mics: int
    tau: float
    sigma2: float

    def __post_init__(self):
        if self.num_mics < 1:
            raise ValueError("num_mics must be >= 1")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    def step_locations(self) -> np.ndarray:
        """Arrival times ``m tau`` in the order the wave reaches the mics."""
        return np.sort(np.arange(self.num_mics) * self.tau)

    def b(self) -> np.ndarray:
        """Penalty impulse amplitudes ``b_m``, m = 1..M."""
        m = np.arange(1, self.num_mics + 1)
        s = self.sigma2
        return np.sqrt(s / ((s + m) * (s + m - 1)))


def ula_delay_error(s: UlaScenario, alpha: float) -> float:
    """``sigma2 / (sigma2 + #{m : alpha >= m tau})``."""
    reached = sum(_ubar(alpha - m * s.tau) for m in range(s.num_mics))
    return s.sigma2 / (s.sigma2 + reached)


def ula_delay_error_from_penalty(s: UlaScenario, alpha: float) -> float:
    """Same curve summed as noncausal floor plus causality penalty.

    ``b_k`` belongs to the ``k``-th mic reached, so for ``tau < 0`` the
    amplitudes run from the far end of the array.
    """
    b = s.b()
    floor = s.sigma2 / (s.sigma2 + s.num_mics)
    return floor + sum(bk ** 2 * _u(t - alpha) for bk, t in zip(b, s.step_locations()))


@dataclass(frozen=True)
class TwoSourceScenario:
    tau1: float
    tau2: float
    sigma2: float

    def __post_init__(self):
        if abs(self.tau1 - self.tau2) <= _EPS:
            raise ValueError("tau1 and tau2 must differ")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def spacing(self) -> float:
        return abs(self.tau1 - self.tau2)

    @property
    def t0(self) -> float:
        return min(0.0, self.tau1)

    @property
    def t1(self) -> float:
        return max(0.0, self.tau1, self.tau2, self.tau1 - self.tau2)

    @property
    def same_side(self) -> bool:
        return self.tau1 * self.tau2 > 0


def two_source_gamma(sigma2: float) -> float:
    """Root in (0, 1) of ``g^2 - c g + 1 = 0`` with ``c = (2 + sigma2)^2 - 2``.

    This is the value for which
    ``det R_x(w) = |1 - g exp(-j w (tau1 - tau2))|^2 / g``.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive (gamma -> 1 as sigma2 -> 0)")
    c = (2.0 + sigma2) ** 2 - 2.0
    # stable form of (c - sqrt(c^2 - 4)) / 2
    return 2.0 / (c + math.sqrt(c * c - 4.0))


def two_source_coefficients(s: TwoSourceScenario) -> tuple[float, float]:
    """``(c1, c2)`` weights of the same-side penalty terms."""
    g = two_source_gamma(s.sigma2)
    a1, a2 = abs(s.tau1), abs(s.tau2)
    if abs(a1 - a2) <= _EPS:
        return 0.0, 0.0
    if a1 < a2:
        return s.sigma2 + 1.0, g + g * s.sigma2 - 1.0
    return 1.0, s.sigma2 + 1.0 - g


def _tail(g: float, alpha: float, t: float, spacing: float) -> float:
    k = max(0, math.floor((alpha - t) / spacing + 1e-9) + 1)
    return g ** (1 + 2 * k) / (1.0 - g * g)


def two_source_penalty(s: TwoSourceScenario, alpha: float) -> float:
    """Causality penalty ``E(alpha) - E_nc`` for two plane waves on two mics.

    Same-side placements (``tau1 tau2 > 0``)::

        [u(t0 - a) + c1^2 g u(t1 - D - a) + c2^2 f(t1)] / (sigma2 + 2)

    Opposite sides (``tau1 tau2 <= 0``)::

        sqrt(g) u(t0 - a) + sigma2 [f(t0 + |tau1|) + g f(t1)]

    with ``D = |tau1 - tau2|`` and the geometric tail
    ``f(t) = g^(1 + 2 max(0, floor((a - t) / D) + 1)) / (1 - g^2)``.
    """
    g = two_source_gamma(s.sigma2)
    d = s.spacing
    t0, t1 = s.t0, s.t1
    if s.same_side:
        c1, c2 = two_source_coefficients(s)
        num = (_u(t0 - alpha) + c1 * c1 * g * _u(t1 - d - alpha)
               + c2 * c2 * _tail(g, alpha, t1, d))
        return num / (s.sigma2 + 2.0)
    return (math.sqrt(g) * _u(t0 - alpha)
            + s.sigma2 * (_tail(g, alpha, t0 + abs(s.tau1), d) + g * _tail(g, alpha, t1, d)))


def two_source_delay_error(s: TwoSourceScenario, alpha: float) -> float:
    return two_source_noncausal_mse(s.sigma2) + two_source_penalty(s, alpha)


def noncausal_mse(scene: Scene, rtol: float = 1e-12) -> float:
    """Grid average of ``R_d - R_xd^H R_x^{-1} R_xd`` (the infinite-delay floor)."""
    rx = np.moveaxis(scene.observation_spectrum(), -1, 0)  # (G, M, M)
    rxd = scene.cross_spectrum().T  # (G, M)
    eig = np.linalg.eigvalsh(rx)
    scale = np.max(eig[:, -1])
    bad = np.nonzero(eig[:, 0] <= rtol * scale)[0]
    if bad.size:
        k = int(bad[0])
        f = k * scene.sample_rate / scene.grid_size
        raise ConditioningError(
            f"R_x is not positive definite at bin {k} ({f:.1f} Hz), "
            f"min eigenvalue {eig[k, 0]:.3e}")
    sol = np.linalg.solve(rx, rxd[..., None])[..., 0]
    quad = np.einsum("gi,gi->g", rxd.conj(), sol).real
    err = scene.desired_spectrum() - quad
    return float(max(np.mean(err), 0.0))


@lru_cache(maxsize=64)
def two_source_noncausal_mse(sigma2: float, grid_size: int = 8192) -> float:
    """Noncausal floor of the two-source scene.

    The noncausal integrand depends on frequency only through
    ``cos(w (tau1 - tau2))``, so its average is the same for every TDOA pair;
    it is evaluated on a one-sample lattice scene.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    h = np.zeros((2, 2, 2))
    h[0, 0, 0] = h[0, 1, 0] = h[1, 0, 1] = h[1, 1, 0] = 1.0
    flat = SpectralDensity.flat(1.0, grid_size, 1.0)
    scene = Scene((flat, flat), h, (flat.scaled(sigma2),) * 2)
    return noncausal_mse(scene)


def ula_curve(s: UlaScenario, alphas) -> DelayErrorCurve:
    alphas = np.asarray(alphas, dtype=float)
    return DelayErrorCurve(alphas, np.array([ula_delay_error(s, a) for a in alphas]),
                           "analytic-ula", 1.0, _digest(s))


def two_source_curve(s: TwoSourceScenario, alphas) -> DelayErrorCurve:
    alphas = np.asarray(alphas, dtype=float)
    vals = np.array([two_source_delay_error(s, a) for a in alphas])
    return DelayErrorCurve(alphas, vals, "analytic-two-source", 1.0, _digest(s))


def _digest(s) -> str:
    import hashlib

    return hashlib.sha256(repr(s).encode()).hexdigest()[:12]
