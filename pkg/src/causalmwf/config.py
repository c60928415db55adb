"""Experiment configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .correlation import DEFAULT_FS, DEFAULT_GRID_SIZE, METHODS, Scene, SpectralDensity
from .synthesis import (
    DEFAULT_FD_TAPS,
    VOWEL_PRESETS,
    HarmonicSourceSpec,
    ar1_psd,
    delay_responses,
    render_sources,
    speech_shaped_psd,
    windowed_autocorrelation,
)


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


SCHEMA = {
    "fs": float,
    "grid_size": int,
    "seed": int,
    "methods": list,
    "alpha": {"start_ms": float, "stop_ms": float, "step_ms": float},
    "fir": {"taps": int, "loading": float},
    "noise": {"sigma2": float, "sigma2_db": float, "shape": str},
    "ula": {"mics": int, "tau_ms": float},
    "two_source": {"tau1_ms": float, "tau2_ms": float, "source": str},
    "sources": list,
    "mixing": {"tdoas_ms": list, "ir_files": list, "truncate_ms": float, "fd_taps": int},
    "synth": {"duration_s": float},
    "output": {"dir": str, "plot": bool},
}
SOURCE_KEYS = {"kind", "power", "corner_hz", "a", "gain", "preset", "f0", "formants",
               "seed", "design_duration_s"}


@dataclass
class SourceConfig:
    kind: str = "white"
    power: float = 1.0
    corner_hz: float = 500.0
    a: float = 0.5
    gain: float = 1.0
    preset: int | None = None
    f0: float | None = None
    formants: list | None = None
    seed: int = 0
    design_duration_s: float = 10.0

    def harmonic(self) -> HarmonicSourceSpec:
        if self.preset is not None:
            base = VOWEL_PRESETS[self.preset]
            return HarmonicSourceSpec(base.f0, base.formants, self.power, base.seed)
        return HarmonicSourceSpec(self.f0, tuple(map(tuple, self.formants)),
                                  self.power, self.seed)

    def spectrum(self, grid_size: int, fs: float) -> SpectralDensity:
        """Model spectrum; vowels are estimated from a rendered design segment."""
        if self.kind == "white":
            return SpectralDensity.flat(self.power, grid_size, fs)
        if self.kind == "speech":
            return speech_shaped_psd(grid_size, fs, self.corner_hz, self.power)
        if self.kind == "ar1":
            return ar1_psd(self.a, grid_size, fs, self.gain)
        from .correlation import autocorr_to_psd

        sig = render_sources([self.harmonic()], self.design_duration_s, fs)[0]
        return autocorr_to_psd(windowed_autocorrelation(sig, fs), grid_size)

    def render_spec(self, grid_size: int, fs: float):
        if self.kind == "vowel":
            return self.harmonic()
        return self.spectrum(grid_size, fs)


@dataclass
class ExperimentConfig:
    command: str
    fs: float = DEFAULT_FS
    grid_size: int = DEFAULT_GRID_SIZE
    seed: int = 0
    methods: list = field(default_factory=list)
    alpha_start_ms: float = -1.0
    alpha_stop_ms: float = 3.0
    alpha_step_ms: float = 0.0625
    taps: int = 512
    loading: float | None = None
    sigma2: float = 0.01
    noise_shape: str = "white"
    mics: int = 4
    tau_ms: float = 0.5
    tau1_ms: float = 1.0
    tau2_ms: float = 0.6
    two_source_kind: str = "white"
    sources: list = field(default_factory=list)
    tdoas_ms: list | None = None
    ir_files: list | None = None
    truncate_ms: float | None = None
    fd_taps: int = DEFAULT_FD_TAPS
    duration_s: float = 10.0
    output_dir: str = "out"
    plot: bool = False
    base_dir: str = "."

    def alpha_grid_ms(self) -> np.ndarray:
        n = int(round((self.alpha_stop_ms - self.alpha_start_ms) / self.alpha_step_ms)) + 1
        return self.alpha_start_ms + self.alpha_step_ms * np.arange(n)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p


DEFAULT_METHODS = {
    "analytic-ula": ["analytic-ula"],
    "analytic-two-source": ["analytic-two-source"],
    "scalar": ["scalar-causal"],
    "sweep": ["fir-cmwf"],
    "synth": [],
    "ingest-check": [],
}
ALLOWED_METHODS = {
    "analytic-ula": {"analytic-ula", "fir-cmwf", "spectral-factor"},
    "analytic-two-source": {"analytic-two-source", "fir-cmwf", "spectral-factor"},
    "scalar": {"scalar-causal", "fir-cmwf"},
    "sweep": {"fir-cmwf", "scalar-causal", "spectral-factor"},
    "synth": set(),
    "ingest-check": {"fir-cmwf"},
}


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML syntax error: {exc}") from exc
    except OSError as exc:
        raise ConfigError(str(path), str(exc)) from exc


def _check_schema(raw: dict, schema: dict, prefix: str = "") -> None:
    for key, value in raw.items():
        name = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(name, "unknown key")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(value, dict):
                raise ConfigError(name, "expected a table")
            _check_schema(value, expected, name + ".")
        elif expected is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(name, f"expected a number, got {value!r}")
        elif expected is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(name, f"expected an integer, got {value!r}")
        elif not isinstance(value, expected):
            raise ConfigError(name, f"expected {expected.__name__}, got {value!r}")


def _finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise ConfigError(name, "must be finite")
    return float(value)


def build_config(command: str, raw: dict | None = None, base_dir=".") -> ExperimentConfig:
    """Validate a nested config mapping into an :class:`ExperimentConfig`."""
    raw = raw or {}
    _check_schema(raw, SCHEMA)
    cfg = ExperimentConfig(command=command, base_dir=str(base_dir))
    get = lambda table, key, default=None: raw.get(table, {}).get(key, default)  # noqa: E731

    cfg.fs = _finite("fs", raw.get("fs", cfg.fs))
    if cfg.fs <= 0 or cfg.fs != int(cfg.fs):
        raise ConfigError("fs", "must be a positive integer number of Hz")
    cfg.grid_size = raw.get("grid_size", cfg.grid_size)
    if cfg.grid_size < 64:
        raise ConfigError("grid_size", "must be >= 64")
    cfg.seed = raw.get("seed", cfg.seed)

    methods = raw.get("methods", DEFAULT_METHODS[command])
    for m in methods:
        if m not in METHODS:
            raise ConfigError("methods", f"unknown method {m!r}")
        if m not in ALLOWED_METHODS[command]:
            raise ConfigError("methods", f"method {m!r} not valid for {command}")
    cfg.methods = list(methods)

    cfg.alpha_start_ms = _finite("alpha.start_ms", get("alpha", "start_ms", cfg.alpha_start_ms))
    cfg.alpha_stop_ms = _finite("alpha.stop_ms", get("alpha", "stop_ms", cfg.alpha_stop_ms))
    cfg.alpha_step_ms = _finite("alpha.step_ms", get("alpha", "step_ms", cfg.alpha_step_ms))
    if cfg.alpha_step_ms <= 0:
        raise ConfigError("alpha.step_ms", "must be positive")
    if cfg.alpha_stop_ms < cfg.alpha_start_ms:
        raise ConfigError("alpha.stop_ms", "must not be below alpha.start_ms")

    cfg.taps = get("fir", "taps", cfg.taps)
    if cfg.taps < 1:
        raise ConfigError("fir.taps", "must be >= 1")
    loading = get("fir", "loading")
    if loading is not None and not loading > 0:
        raise ConfigError("fir.loading", "must be positive")
    cfg.loading = loading

    noise = raw.get("noise", {})
    if "sigma2" in noise and "sigma2_db" in noise:
        raise ConfigError("noise", "give sigma2 or sigma2_db, not both")
    if "sigma2_db" in noise:
        cfg.sigma2 = 10 ** (_finite("noise.sigma2_db", noise["sigma2_db"]) / 10)
    elif "sigma2" in noise:
        cfg.sigma2 = _finite("noise.sigma2", noise["sigma2"])
        if not cfg.sigma2 > 0:
            raise ConfigError("noise.sigma2", "must be positive")
    cfg.noise_shape = noise.get("shape", cfg.noise_shape)
    if cfg.noise_shape not in ("white", "source"):
        raise ConfigError("noise.shape", "must be 'white' or 'source'")

    cfg.mics = get("ula", "mics", cfg.mics)
    if cfg.mics < 1:
        raise ConfigError("ula.mics", "must be >= 1")
    cfg.tau_ms = _finite("ula.tau_ms", get("ula", "tau_ms", cfg.tau_ms))
    cfg.tau1_ms = _finite("two_source.tau1_ms", get("two_source", "tau1_ms", cfg.tau1_ms))
    cfg.tau2_ms = _finite("two_source.tau2_ms", get("two_source", "tau2_ms", cfg.tau2_ms))
    if command == "analytic-two-source" and cfg.tau1_ms == cfg.tau2_ms:
        raise ConfigError("two_source.tau2_ms", "must differ from tau1_ms")
    cfg.two_source_kind = get("two_source", "source", cfg.two_source_kind)
    if cfg.two_source_kind not in ("white", "speech"):
        raise ConfigError("two_source.source", "must be 'white' or 'speech'")

    cfg.sources = []
    for i, src in enumerate(raw.get("sources", [])):
        name = f"sources[{i}]"
        if not isinstance(src, dict):
            raise ConfigError(name, "expected a table")
        for k in src:
            if k not in SOURCE_KEYS:
                raise ConfigError(f"{name}.{k}", "unknown key")
        sc = SourceConfig(**src)
        if sc.kind not in ("white", "speech", "ar1", "vowel"):
            raise ConfigError(f"{name}.kind", f"unknown source kind {sc.kind!r}")
        if not sc.power > 0:
            raise ConfigError(f"{name}.power", "must be positive")
        if sc.kind == "ar1" and not abs(sc.a) < 1:
            raise ConfigError(f"{name}.a", "AR(1) coefficient must satisfy |a| < 1")
        if sc.kind == "vowel":
            if sc.preset is None and (sc.f0 is None or sc.formants is None):
                raise ConfigError(name, "vowel needs preset or f0 + formants")
            if sc.preset is not None and not 0 <= sc.preset < len(VOWEL_PRESETS):
                raise ConfigError(f"{name}.preset", f"must be in 0..{len(VOWEL_PRESETS) - 1}")
        cfg.sources.append(sc)

    mixing = raw.get("mixing", {})
    cfg.tdoas_ms = mixing.get("tdoas_ms")
    cfg.ir_files = mixing.get("ir_files")
    cfg.truncate_ms = mixing.get("truncate_ms")
    cfg.fd_taps = mixing.get("fd_taps", cfg.fd_taps)
    if cfg.truncate_ms is not None and not cfg.truncate_ms > 0:
        raise ConfigError("mixing.truncate_ms", "must be positive")
    if cfg.tdoas_ms is not None and cfg.ir_files is not None:
        raise ConfigError("mixing", "give tdoas_ms or ir_files, not both")
    if cfg.tdoas_ms is not None:
        try:
            t = np.array(cfg.tdoas_ms, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError("mixing.tdoas_ms", "must be a rectangular numeric table") from exc
        if t.ndim != 2 or not np.all(np.isfinite(t)):
            raise ConfigError("mixing.tdoas_ms", "must be an M x N table of finite values")
        if cfg.sources and t.shape[1] != len(cfg.sources):
            raise ConfigError("mixing.tdoas_ms",
                              f"{t.shape[1]} columns but {len(cfg.sources)} sources")
    if cfg.ir_files is not None:
        for p in cfg.ir_files:
            if not cfg.resolve(p).exists():
                raise ConfigError("mixing.ir_files", f"file not found: {p}")
    if command in ("scalar", "sweep", "synth") and not cfg.sources:
        raise ConfigError("sources", f"{command} needs at least one [[sources]] entry")
    if command == "ingest-check" and not cfg.ir_files:
        raise ConfigError("mixing.ir_files", "ingest-check needs impulse response files")

    cfg.duration_s = _finite("synth.duration_s", get("synth", "duration_s", cfg.duration_s))
    if not cfg.duration_s > 0:
        raise ConfigError("synth.duration_s", "must be positive")
    cfg.output_dir = get("output", "dir", cfg.output_dir)
    cfg.plot = get("output", "plot", cfg.plot)
    return cfg


def source_spectra(cfg: ExperimentConfig) -> list[SpectralDensity]:
    return [s.spectrum(cfg.grid_size, cfg.fs) for s in cfg.sources]


def noise_spectra(cfg: ExperimentConfig, spectra, num_mics: int) -> tuple:
    if cfg.noise_shape == "source":
        return (spectra[0].scaled(cfg.sigma2),) * num_mics
    return (SpectralDensity.flat(cfg.sigma2, cfg.grid_size, cfg.fs),) * num_mics


def mixing_responses(cfg: ExperimentConfig, num_sources: int):
    """(M, N, K) responses, padding, and an ingest record (or None)."""
    if cfg.ir_files:
        from .wavio import ingest_impulse_responses

        ing = ingest_impulse_responses([cfg.resolve(p) for p in cfg.ir_files],
                                       cfg.truncate_ms)
        if ing.sample_rate != cfg.fs:
            raise ConfigError("mixing.ir_files",
                              f"sample rate {ing.sample_rate:g} differs from fs={cfg.fs:g}")
        if ing.impulse_responses.shape[1] != num_sources:
            raise ConfigError("mixing.ir_files",
                              f"{ing.impulse_responses.shape[1]} files for {num_sources} sources")
        return ing.impulse_responses, 0, ing.record()
    if cfg.tdoas_ms is not None:
        irs, pad = delay_responses(np.array(cfg.tdoas_ms) * 1e-3, cfg.fs, cfg.fd_taps)
        return irs, pad, None
    return np.ones((1, num_sources, 1)), 0, None


def scene_from_config(cfg: ExperimentConfig):
    spectra = source_spectra(cfg)
    irs, pad, record = mixing_responses(cfg, len(spectra))
    scene = Scene(spectra, irs, noise_spectra(cfg, spectra, irs.shape[0]), padding=pad)
    return scene, record
