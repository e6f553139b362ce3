"""Short-time Fourier analysis and weighted overlap-add synthesis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from farfield.core.audio import AudioBuffer
from farfield.errors import ConfigError, ShapeError


def make_window(kind: str, length: int) -> np.ndarray:
    """Periodic (DFT-even) analysis window."""
    n = np.arange(length)
    if kind == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / length)
    if kind == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * n / length)
    if kind == "rectangular":
        return np.ones(length)
    raise ConfigError(f"unknown window {kind!r}")


def is_cola(window: np.ndarray, hop: int, rtol: float = 1e-10) -> bool:
    """True if shifted copies of ``window`` at ``hop`` sum to a constant."""
    length = len(window)
    acc = np.zeros(hop)
    for start in range(0, length, hop):
        seg = window[start : start + hop]
        acc[: len(seg)] += seg
    return bool(np.ptp(acc) <= rtol * max(np.max(np.abs(acc)), 1e-300))


class StftConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    window_length: int = 512
    hop: int = 128
    window: Literal["hann", "hamming", "rectangular"] = "hann"
    fft_size: int = 512

    @model_validator(mode="after")
    def _check(self):
        if self.window_length < 1 or self.hop < 1:
            raise ConfigError("window_length and hop must be positive")
        if self.window_length > self.fft_size:
            raise ConfigError(
                f"window_length {self.window_length} exceeds fft_size {self.fft_size}"
            )
        if self.hop > self.window_length:
            raise ConfigError("hop must not exceed window_length")
        if not is_cola(make_window(self.window, self.window_length), self.hop):
            raise ConfigError(
                f"{self.window} window of length {self.window_length} is not COLA "
                f"at hop {self.hop}"
            )
        return self

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def edge_pad(self) -> int:
        return self.window_length - self.hop

    def analysis_window(self) -> np.ndarray:
        return make_window(self.window, self.window_length)

    def n_frames(self, length: int) -> int:
        """Frames needed to cover ``length`` samples plus both edge pads."""
        padded = length + 2 * self.edge_pad
        return 1 + max(0, -(-(padded - self.window_length) // self.hop))


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex STFT values shaped ``(channels, bins, frames)``."""

    values: np.ndarray
    sample_rate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 3:
            raise ShapeError(f"expected (channels, bins, frames), got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def bins(self) -> int:
        return self.values.shape[1]

    @property
    def frames(self) -> int:
        return self.values.shape[2]


def _frame_signal(x: np.ndarray, config: StftConfig) -> np.ndarray:
    """Windowed frames ``(channels, frames, window_length)`` of the padded input.

    The input is padded with ``window_length - hop`` zeros in front, so frame
    ``t`` covers padded samples ``[t*hop, t*hop + window_length)`` and every
    original sample lies under a full complement of overlapping windows.
    """
    channels, length = x.shape
    n_frames = config.n_frames(length)
    total = (n_frames - 1) * config.hop + config.window_length
    padded = np.zeros((channels, total))
    padded[:, config.edge_pad : config.edge_pad + length] = x
    view = np.lib.stride_tricks.sliding_window_view(padded, config.window_length, axis=1)
    return view[:, :: config.hop][:, :n_frames] * config.analysis_window()


def stft(buffer: AudioBuffer, config: StftConfig | None = None) -> Spectrogram:
    config = config or StftConfig()
    frames = _frame_signal(buffer.samples, config)
    spec = np.fft.rfft(frames, n=config.fft_size, axis=-1)
    return Spectrogram(np.swapaxes(spec, 1, 2), buffer.sample_rate)


def istft(spec: Spectrogram, config: StftConfig | None = None, length: int | None = None) -> AudioBuffer:
    config = config or StftConfig()
    if spec.bins != config.bins:
        raise ShapeError(f"spectrogram has {spec.bins} bins, config expects {config.bins}")
    window = config.analysis_window()
    frames = np.fft.irfft(np.swapaxes(spec.values, 1, 2), n=config.fft_size, axis=-1)
    frames = frames[..., : config.window_length] * window

    n_frames = spec.frames
    total = (n_frames - 1) * config.hop + config.window_length if n_frames else 0
    out = np.zeros((spec.channels, total))
    norm = np.zeros(total)
    wsq = window * window
    for t in range(n_frames):
        start = t * config.hop
        out[:, start : start + config.window_length] += frames[:, t]
        norm[start : start + config.window_length] += wsq
    nonzero = norm > 1e-10 * wsq.max()
    out[:, nonzero] /= norm[nonzero]
    out = out[:, config.edge_pad :]

    if length is None:
        length = max(0, total - 2 * config.edge_pad)
    result = np.zeros((spec.channels, length))
    keep = min(length, out.shape[1])
    result[:, :keep] = out[:, :keep]
    return AudioBuffer(result, spec.sample_rate)
