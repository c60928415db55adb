"""Command-line experiment harness.

Each subcommand reads an optional TOML config, applies flag overrides, runs
its sweeps and then writes one CSV per method plus ``manifest.json`` into
the output directory (``--out``, else ``$CAUSALMWF_OUTPUT_DIR``, else the
config's ``output.dir``).  Files are written only after every computation
has finished.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    TwoSourceScenario,
    UlaScenario,
    noncausal_mse,
    two_source_curve,
    ula_curve,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    SourceConfig,
    build_config,
    load_toml,
    scene_from_config,
)
from .correlation import ConditioningError, DelayErrorCurve
from .fir import delay_sweep
from .spectral import scene_penalty_curve, scene_scalar_curve
from .synthesis import (
    render_mixture,
    render_sources,
    speech_shaped_psd,
    two_source_scene,
    ula_scene,
)

CSV_HEADER = "alpha_ms,mse_linear,mse_db,method,scene_digest"
OUTPUT_ENV = "CAUSALMWF_OUTPUT_DIR"

EXIT_CONFIG = 2
EXIT_CONDITIONING = 3

# flag -> (table, key); None table means top level
OVERRIDES = {
    "fs": (None, "fs"),
    "grid_size": (None, "grid_size"),
    "seed": (None, "seed"),
    "methods": (None, "methods"),
    "alpha_start_ms": ("alpha", "start_ms"),
    "alpha_stop_ms": ("alpha", "stop_ms"),
    "alpha_step_ms": ("alpha", "step_ms"),
    "taps": ("fir", "taps"),
    "loading": ("fir", "loading"),
    "sigma2": ("noise", "sigma2"),
    "sigma2_db": ("noise", "sigma2_db"),
    "mics": ("ula", "mics"),
    "tau_ms": ("ula", "tau_ms"),
    "tau1_ms": ("two_source", "tau1_ms"),
    "tau2_ms": ("two_source", "tau2_ms"),
    "two_source_kind": ("two_source", "source"),
    "ir_files": ("mixing", "ir_files"),
    "truncate_ms": ("mixing", "truncate_ms"),
    "duration_s": ("synth", "duration_s"),
    "plot": ("output", "plot"),
}


def curve_csv(curve: DelayErrorCurve, alphas_ms=None) -> str:
    """CSV text for one curve; ``alphas_ms`` overrides the printed delays."""
    a_ms = curve.alphas_ms if alphas_ms is None else np.asarray(alphas_ms)
    lines = [CSV_HEADER]
    for a, e, d in zip(a_ms, curve.mse_linear, curve.mse_db):
        lines.append(f"{a:.6f},{float(e)!r},{float(d)!r},{curve.method},{curve.scene_digest}")
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sample_alphas(cfg: ExperimentConfig, grid_ms: np.ndarray, manifest: dict) -> np.ndarray:
    samples = np.rint(grid_ms * 1e-3 * cfg.fs).astype(int)
    if np.any(np.diff(samples) <= 0):
        raise ConfigError("alpha.step_ms",
                          f"step {cfg.alpha_step_ms} ms is below one sample at fs={cfg.fs:g}")
    err = samples - grid_ms * 1e-3 * cfg.fs
    manifest["alpha_rounding"] = {
        "samples_first": int(samples[0]),
        "samples_last": int(samples[-1]),
        "max_abs_rounding_samples": float(np.max(np.abs(err))),
    }
    return samples


def _fir_curve(cfg, scene, grid_ms, manifest) -> tuple[DelayErrorCurve, np.ndarray]:
    samples = _sample_alphas(cfg, grid_ms, manifest)
    manifest["taps"] = cfg.taps
    curve = delay_sweep(scene, cfg.taps, samples, cfg.loading, in_samples=True)
    manifest["loading"] = cfg.loading if cfg.loading is not None else 1e-4 * scene.target_power
    return curve, 1e3 * samples / cfg.fs


def _run_analytic_ula(cfg, manifest):
    grid = cfg.alpha_grid_ms()
    s = UlaScenario(cfg.mics, cfg.tau_ms * 1e-3, cfg.sigma2)
    out = {}
    if "analytic-ula" in cfg.methods:
        out["analytic-ula"] = (ula_curve(s, grid * 1e-3), grid)
    if {"fir-cmwf", "spectral-factor"} & set(cfg.methods):
        scene = ula_scene(cfg.mics, s.tau, cfg.sigma2, fs=cfg.fs, grid_size=cfg.grid_size)
        manifest["padding_samples"] = scene.padding
        if "fir-cmwf" in cfg.methods:
            out["fir-cmwf"] = _fir_curve(cfg, scene, grid, manifest)
        if "spectral-factor" in cfg.methods:
            samples = _sample_alphas(cfg, grid, manifest)
            out["spectral-factor"] = (scene_penalty_curve(scene, samples), 1e3 * samples / cfg.fs)
    manifest["target_power"] = 1.0
    return out


def _run_analytic_two_source(cfg, manifest):
    grid = cfg.alpha_grid_ms()
    s = TwoSourceScenario(cfg.tau1_ms * 1e-3, cfg.tau2_ms * 1e-3, cfg.sigma2)
    out = {}
    if "analytic-two-source" in cfg.methods:
        if cfg.two_source_kind != "white":
            raise ConfigError("methods", "analytic-two-source needs two_source.source = 'white'")
        out["analytic-two-source"] = (two_source_curve(s, grid * 1e-3), grid)
    if {"fir-cmwf", "spectral-factor"} & set(cfg.methods):
        spec = (speech_shaped_psd(cfg.grid_size, cfg.fs) if cfg.two_source_kind == "speech"
                else 1.0)
        scene = two_source_scene(s.tau1, s.tau2, cfg.sigma2, spec, fs=cfg.fs,
                                 grid_size=cfg.grid_size)
        manifest["padding_samples"] = scene.padding
        manifest["noncausal_mse"] = noncausal_mse(scene)
        if "fir-cmwf" in cfg.methods:
            out["fir-cmwf"] = _fir_curve(cfg, scene, grid, manifest)
        if "spectral-factor" in cfg.methods:
            samples = _sample_alphas(cfg, grid, manifest)
            out["spectral-factor"] = (scene_penalty_curve(scene, samples), 1e3 * samples / cfg.fs)
    manifest["target_power"] = 1.0
    return out


def _run_scene_sweep(cfg, manifest):
    scene, record = scene_from_config(cfg)
    if record:
        manifest["impulse_responses"] = record
    manifest["padding_samples"] = scene.padding
    manifest["target_power"] = scene.target_power
    manifest["num_mics"] = scene.num_mics
    manifest["num_sources"] = scene.num_sources
    grid = cfg.alpha_grid_ms()
    out = {}
    if "scalar-causal" in cfg.methods:
        if scene.num_mics != 1:
            raise ConfigError("methods", "scalar-causal needs a single-mic scene")
        samples = _sample_alphas(cfg, grid, manifest)
        out["scalar-causal"] = (scene_scalar_curve(scene, samples, in_samples=True),
                                1e3 * samples / cfg.fs)
    if "spectral-factor" in cfg.methods:
        samples = _sample_alphas(cfg, grid, manifest)
        out["spectral-factor"] = (scene_penalty_curve(scene, samples), 1e3 * samples / cfg.fs)
    if "fir-cmwf" in cfg.methods:
        out["fir-cmwf"] = _fir_curve(cfg, scene, grid, manifest)
    return out


def _run_synth(cfg, manifest, out_dir: Path):
    from .wavio import write_impulse_responses, write_wav

    scene, record = scene_from_config(cfg)
    specs = [s.render_spec(cfg.grid_size, cfg.fs) for s in cfg.sources]
    sources = render_sources(specs, cfg.duration_s, cfg.fs, cfg.seed)
    mix = render_mixture(scene, sources, noise_seed=cfg.seed + 1)
    manifest.update(padding_samples=scene.padding, target_power=scene.target_power,
                    num_mics=scene.num_mics, num_sources=scene.num_sources,
                    samples=int(sources.shape[1]))
    if record:
        manifest["impulse_responses"] = record

    def write():
        files = {"sources": "sources.wav", "mixture": "mixture.wav", "target": "target.wav"}
        write_wav(out_dir / files["sources"], sources, cfg.fs)
        write_wav(out_dir / files["mixture"], mix.x, cfg.fs)
        write_wav(out_dir / files["target"], mix.d0, cfg.fs)
        irs = write_impulse_responses(out_dir, scene.impulse_responses, cfg.fs)
        files["impulse_responses"] = [p.name for p in irs]
        return files

    return write


def _run_ingest_check(cfg, manifest):
    from .wavio import ingest_impulse_responses

    ing = ingest_impulse_responses([cfg.resolve(p) for p in cfg.ir_files], cfg.truncate_ms)
    if ing.sample_rate != cfg.fs:
        raise ConfigError("mixing.ir_files",
                          f"sample rate {ing.sample_rate:g} differs from fs={cfg.fs:g}")
    manifest["impulse_responses"] = ing.record()
    m, n, k = ing.impulse_responses.shape
    print(f"ingested {n} source file(s): {m} mics, {ing.original_length} -> "
          f"{ing.retained_length} samples at {ing.sample_rate:g} Hz")
    out = {}
    if "fir-cmwf" in cfg.methods:
        if not cfg.sources:
            cfg.sources = [SourceConfig() for _ in range(n)]
        scene, _ = scene_from_config(cfg)
        manifest["target_power"] = scene.target_power
        out["fir-cmwf"] = _fir_curve(cfg, scene, cfg.alpha_grid_ms(), manifest)
    return out


RUNNERS = {
    "analytic-ula": _run_analytic_ula,
    "analytic-two-source": _run_analytic_two_source,
    "scalar": _run_scene_sweep,
    "sweep": _run_scene_sweep,
    "ingest-check": _run_ingest_check,
}


def run(cfg: ExperimentConfig, out_dir: Path) -> dict:
    """Run one experiment; returns the manifest."""
    t0 = time.perf_counter()
    manifest = {"command": cfg.command, "version": __version__, "config": cfg.echo()}
    if cfg.command == "synth":
        writer = _run_synth(cfg, manifest, out_dir)
        curves = {}
    else:
        curves = RUNNERS[cfg.command](cfg, manifest)
        writer = None
    manifest["timings_s"] = {"compute": time.perf_counter() - t0}
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for method, (curve, alphas_ms) in curves.items():
        path = out_dir / f"{method}.csv"
        _atomic_write(path, curve_csv(curve, alphas_ms))
        outputs[method] = {"csv": path.name, "rows": len(curve),
                           "scene_digest": curve.scene_digest}
    if writer is not None:
        outputs.update(writer())
    manifest["outputs"] = outputs
    if cfg.plot and curves:
        manifest["outputs"]["plot"] = _plot(curves, out_dir)
    manifest["timings_s"]["total"] = time.perf_counter() - t0
    _atomic_write(out_dir / "manifest.json", json.dumps(manifest, indent=2, default=str) + "\n")
    return manifest


def _plot(curves, out_dir: Path) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    for method, (curve, alphas_ms) in curves.items():
        ax.step(alphas_ms, curve.mse_db, where="post", label=method)
    ax.set_xlabel("delay (ms)")
    ax.set_ylabel("relative MSE (dB)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_dir / "curves.svg")
    plt.close(fig)
    return "curves.svg"


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML experiment file")
    common.add_argument("-o", "--out", help=f"output directory (default ${OUTPUT_ENV})")
    common.add_argument("--fs", type=float)
    common.add_argument("--grid-size", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--methods", type=lambda s: s.split(","),
                        help="comma-separated method list")
    common.add_argument("--alpha-start-ms", type=float)
    common.add_argument("--alpha-stop-ms", type=float)
    common.add_argument("--alpha-step-ms", type=float)
    common.add_argument("--taps", type=int)
    common.add_argument("--loading", type=float)
    noise = common.add_mutually_exclusive_group()
    noise.add_argument("--sigma2", type=float)
    noise.add_argument("--sigma2-db", type=float)
    common.add_argument("--plot", action="store_true", default=None)

    p = argparse.ArgumentParser(prog="causalmwf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("analytic-ula", parents=[common], help="closed-form ULA curve")
    s.add_argument("--mics", type=int)
    s.add_argument("--tau-ms", type=float)
    s = sub.add_parser("analytic-two-source", parents=[common],
                       help="closed-form two-source curve")
    s.add_argument("--tau1-ms", type=float)
    s.add_argument("--tau2-ms", type=float)
    s.add_argument("--two-source-kind", choices=["white", "speech"])
    sub.add_parser("scalar", parents=[common], help="single-channel causal curve")
    s = sub.add_parser("sweep", parents=[common], help="FIR delay sweep of a scene")
    s.add_argument("--ir-files", nargs="+")
    s.add_argument("--truncate-ms", type=float)
    s = sub.add_parser("synth", parents=[common], help="render scene signals to WAV")
    s.add_argument("--duration-s", type=float)
    s = sub.add_parser("ingest-check", parents=[common], help="validate IR files")
    s.add_argument("--ir-files", nargs="+")
    s.add_argument("--truncate-ms", type=float)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = load_toml(args.config) if args.config else {}
        base = Path(args.config).parent if args.config else Path(".")
        for flag, (table, key) in OVERRIDES.items():
            value = getattr(args, flag, None)
            if value is None:
                continue
            if flag in ("sigma2", "sigma2_db"):
                raw.setdefault("noise", {}).pop("sigma2", None)
                raw["noise"].pop("sigma2_db", None)
            if table is None:
                raw[key] = value
            else:
                raw.setdefault(table, {})[key] = value
        cfg = build_config(args.command, raw, base)
        out_dir = Path(args.out or os.environ.get(OUTPUT_ENV) or cfg.resolve(cfg.output_dir))
        manifest = run(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConditioningError as exc:
        print(f"conditioning failure in {args.command} solve: {exc}", file=sys.stderr)
        return EXIT_CONDITIONING
    for name, info in manifest.get("outputs", {}).items():
        print(f"{name}: {info}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
