"""32-bit float WAV interchange for signals and impulse responses."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.io.wavfile


def write_wav(path, data, fs: float) -> None:
    """Write (C, T) or (T,) samples as IEEE-float little-endian WAV."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data.T
    if int(fs) != fs:
        raise ValueError("WAV sample rate must be an integer")
    scipy.io.wavfile.write(str(path), int(fs), np.ascontiguousarray(data))


def read_wav(path) -> tuple[np.ndarray, float]:
    """Return ``(data, fs)`` with data shaped (C, T) as float32."""
    fs, data = scipy.io.wavfile.read(str(path))
    if data.dtype != np.float32:
        if np.issubdtype(data.dtype, np.integer):
            data = data.astype(np.float32) / np.float32(np.iinfo(data.dtype).max)
        else:
            data = data.astype(np.float32)
    data = np.atleast_2d(data.T) if data.ndim == 2 else data[None, :]
    return data, float(fs)


def write_impulse_responses(directory, irs: np.ndarray, fs: float,
                            stem: str = "ir_source") -> list[Path]:
    """One file per source, one channel per mic: ``<stem><n>.wav``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in range(irs.shape[1]):
        p = directory / f"{stem}{n}.wav"
        write_wav(p, irs[:, n, :], fs)
        paths.append(p)
    return paths


@dataclass(frozen=True)
class IngestedResponses:
    impulse_responses: np.ndarray  # (M, N, K) float64 of the stored float32 values
    sample_rate: float
    original_length: int
    retained_length: int
    paths: tuple

    def record(self) -> dict:
        return {
            "files": [str(p) for p in self.paths],
            "sample_rate": self.sample_rate,
            "original_samples": self.original_length,
            "retained_samples": self.retained_length,
            "truncated": self.retained_length < self.original_length,
        }


def ingest_impulse_responses(paths: Sequence, truncate_ms: float | None = None
                             ) -> IngestedResponses:
    """Load per-source IR files (mics as channels) and truncate them.

    All files must share the sample rate and channel count.
    """
    if not paths:
        raise ValueError("no impulse response files given")
    if truncate_ms is not None and truncate_ms <= 0:
        raise ValueError("truncate_ms must be positive")
    loaded = [read_wav(p) for p in paths]
    fs = loaded[0][1]
    chans = loaded[0][0].shape[0]
    for (data, rate), p in zip(loaded, paths):
        if rate != fs:
            raise ValueError(f"{p}: sample rate {rate:g} differs from {fs:g}")
        if data.shape[0] != chans:
            raise ValueError(f"{p}: {data.shape[0]} channels, expected {chans}")
    length = max(d.shape[1] for d, _ in loaded)
    irs = np.zeros((chans, len(loaded), length))
    for n, (data, _) in enumerate(loaded):
        irs[:, n, :data.shape[1]] = data
    keep = length
    if truncate_ms is not None:
        keep = min(length, int(round(truncate_ms * 1e-3 * fs)))
        irs = irs[:, :, :keep]
    return IngestedResponses(irs, fs, length, keep, tuple(Path(p) for p in paths))
