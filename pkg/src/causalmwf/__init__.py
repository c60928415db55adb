"""Delay/error tradeoffs of causal multichannel Wiener filters."""

__version__ = "0.1.0"

from .analytic import (
    TwoSourceScenario,
    UlaScenario,
    noncausal_mse,
    two_source_curve,
    two_source_delay_error,
    two_source_gamma,
    ula_curve,
    ula_delay_error,
)
from .correlation import (
    ConditioningError,
    CorrelationSequence,
    DelayErrorCurve,
    InvalidSpectrumError,
    Scene,
    SpectralDensity,
    assemble_mixture_correlations,
    autocorr_to_psd,
    psd_to_autocorr,
)
from .fir import (
    BlockCorrelationMatrix,
    MultichannelFirFilter,
    build_block_correlation,
    build_cross_correlation,
    delay_sweep,
    design_filter,
    model_mse,
    sample_relative_mse,
)
from .spectral import (
    MinimumPhaseFactor,
    PenaltySequence,
    scalar_causal_delay_error,
    scalar_spectral_factor,
    scene_penalty_curve,
    scene_scalar_curve,
    shape_penalty,
    triangular_penalty,
    ula_penalty,
)
from .synthesis import (
    VOWEL_PRESETS,
    HarmonicSourceSpec,
    PlaneWaveArraySpec,
    fractional_delay_fir,
    plane_wave_scene,
    render_mixture,
    render_sources,
    speech_shaped_psd,
    two_source_scene,
    ula_scene,
    windowed_autocorrelation,
)
