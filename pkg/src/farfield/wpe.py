"""Iterative weighted prediction error (WPE) dereverberation.

Per frequency bin the late reverberation of every channel is predicted from
delayed past frames of all channels with a linear filter; the filter is the
variance-weighted least-squares solution, and the variances are re-estimated
from the dereverberated output at each iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import cho_factor, cho_solve
from scipy.ndimage import uniform_filter1d

from farfield.core.audio import AudioBuffer
from farfield.core.stft import Spectrogram, StftConfig, istft, stft
from farfield.errors import ConfigError, DataError, InsufficientFramesError


class WpeConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    taps: int = 10
    delay: int = 3
    iterations: int = 3
    stft: StftConfig = Field(default_factory=StftConfig)
    epsilon: float = 1e-8
    psd_floor: float = 1e-10
    psd_context: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise ConfigError("taps, delay and iterations must all be >= 1")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not self.psd_floor > 0:
            raise ConfigError("psd_floor must be positive")
        if self.psd_context < 0:
            raise ConfigError("psd_context must be >= 0")
        return self


@dataclass
class WpeState:
    """Diagnostics of one WPE run.

    ``filters`` is ``(bins, taps*channels, channels)``, ``psd`` the final
    per-bin frame variances ``(bins, frames)``, floored at ``psd_floor``
    times the input's mean spectral power. ``cost[i]`` is the objective
    after iteration ``i``: sum over bins and frames of
    ``channels * log(var) + |d|^2 / var``, with ``weighted_error[i]`` its
    second term. The objective never increases across iterations.
    """

    filters: np.ndarray
    psd: np.ndarray
    cost: list
    weighted_error: list

    def to_json(self) -> dict:
        return {
            "iterations": len(self.cost),
            "cost": [float(c) for c in self.cost],
            "weighted_error": [float(c) for c in self.weighted_error],
        }


def _stack_delayed(x: np.ndarray, taps: int, delay: int) -> np.ndarray:
    """``(taps*channels, frames)``; rows ``k*C:(k+1)*C`` hold ``x`` delayed by
    ``delay + k`` frames, zero-filled."""
    channels, frames = x.shape
    out = np.zeros((taps * channels, frames), dtype=x.dtype)
    for k in range(taps):
        shift = delay + k
        if shift < frames:
            out[k * channels : (k + 1) * channels, shift:] = x[:, : frames - shift]
    return out


def _variance(d: np.ndarray, config: WpeConfig, floor: float) -> np.ndarray:
    lam = np.mean(d.real**2 + d.imag**2, axis=0)
    if config.psd_context:
        lam = uniform_filter1d(lam, 2 * config.psd_context + 1, mode="nearest")
    return np.maximum(lam, floor)


def _psd_floor(spec: np.ndarray, config: WpeConfig) -> float:
    """Variance floor relative to the input's mean spectral power, so that
    scaling the input scales every variance alike."""
    reference = float(np.mean(spec.real**2 + spec.imag**2)) if spec.size else 0.0
    return config.psd_floor * reference if reference > 0 else config.psd_floor


def _wpe_bin(x, config: WpeConfig, floor: float, history: int, init_filter):
    """Dereverberate one bin. ``x`` is ``(channels, frames)``; the first
    ``history`` frames only feed the predictor."""
    channels = x.shape[0]
    stacked = _stack_delayed(x, config.taps, config.delay)[:, history:]
    target = x[:, history:]
    dim = stacked.shape[0]

    if init_filter is None:
        d = target
        filt = np.zeros((dim, channels), dtype=np.complex128)
    else:
        filt = init_filter
        d = target - filt.conj().T @ stacked

    costs, errors = [], []
    lam = _variance(d, config, floor)
    for _ in range(config.iterations):
        lam = _variance(d, config, floor)
        err = float(np.sum((d.real**2 + d.imag**2) / lam))
        weighted = stacked / lam
        cov = weighted @ stacked.conj().T
        cross = weighted @ target.conj().T
        trace = float(np.real(np.trace(cov)))
        if trace > 0:
            cov[np.diag_indices(dim)] += config.epsilon * trace / dim
            candidate = cho_solve(cho_factor(cov, lower=True), cross)
            d_new = target - candidate.conj().T @ stacked
            err_new = float(np.sum((d_new.real**2 + d_new.imag**2) / lam))
            # on badly conditioned bins the loading can push the solve
            # uphill; keep the previous filter then
            if err_new <= err:
                filt, d, err = candidate, d_new, err_new
        errors.append(err)
        costs.append(channels * float(np.sum(np.log(lam))) + err)
    return d, filt, lam, costs, errors


def _wpe_frames(
    spec: np.ndarray, config: WpeConfig, floor: float, history: int = 0, init_filters=None
):
    bins, channels, frames = spec.shape
    out = np.empty((bins, channels, frames - history), dtype=np.complex128)
    filters = np.empty((bins, config.taps * channels, channels), dtype=np.complex128)
    psd = np.empty((bins, frames - history))
    costs = np.zeros(config.iterations)
    errors = np.zeros(config.iterations)
    for f in range(bins):
        init = None if init_filters is None else init_filters[f]
        d, filt, lam, c, e = _wpe_bin(spec[f], config, floor, history, init)
        out[f], filters[f], psd[f] = d, filt, lam
        costs += c
        errors += e
    return out, WpeState(filters, psd, list(costs), list(errors))


def _check_input(audio: AudioBuffer, config: WpeConfig) -> np.ndarray:
    if not np.all(np.isfinite(audio.samples)):
        raise DataError("WPE input contains non-finite samples")
    frames = config.stft.n_frames(audio.frames)
    needed = config.delay + config.taps + 1
    if audio.frames == 0 or frames < needed:
        raise InsufficientFramesError(
            f"input gives {frames} STFT frames, WPE needs more than {needed - 1}"
        )
    # (bins, channels, frames)
    return np.transpose(stft(audio, config.stft).values, (1, 0, 2))


def _synthesize(spec: np.ndarray, audio: AudioBuffer, config: WpeConfig) -> AudioBuffer:
    values = np.transpose(spec, (1, 0, 2))
    return istft(Spectrogram(values, audio.sample_rate), config.stft, audio.frames)


def wpe_dereverberate(audio: AudioBuffer, config: WpeConfig | None = None):
    """Dereverberate all channels of ``audio``; returns ``(audio, WpeState)``."""
    config = config or WpeConfig()
    spec = _check_input(audio, config)
    out, state = _wpe_frames(spec, config, _psd_floor(spec, config))
    return _synthesize(out, audio, config), state


def _block_starts(frames: int, block: int, overlap: int, minimum: int):
    step = block - overlap
    starts = [0]
    while starts[-1] + block < frames:
        starts.append(starts[-1] + step)
    # fold a runt tail into the previous block
    if len(starts) > 1 and frames - starts[-1] < minimum:
        starts.pop()
    return starts


def wpe_block_online(audio: AudioBuffer, config: WpeConfig | None = None, block_seconds: float = 10.0) -> AudioBuffer:
    """Blockwise WPE for long recordings.

    Blocks overlap by a quarter block; each block is solved in batch mode,
    with past frames from the preceding block as predictor context and the
    preceding block's filters as the starting point. Overlaps are
    cross-faded linearly in the STFT domain before one synthesis pass.
    """
    config = config or WpeConfig()
    window_seconds = config.stft.window_length / audio.sample_rate
    if block_seconds < 4 * window_seconds:
        raise ConfigError(
            f"block_seconds must be at least {4 * window_seconds:.4f} s (4 STFT windows)"
        )
    spec = _check_input(audio, config)
    floor = _psd_floor(spec, config)
    frames = spec.shape[2]
    block = max(1, int(round(block_seconds * audio.sample_rate / config.stft.hop)))
    if block >= frames:
        out, _ = _wpe_frames(spec, config, floor)
        return _synthesize(out, audio, config)

    overlap = max(1, block // 4)
    context = config.delay + config.taps - 1
    starts = _block_starts(frames, block, overlap, config.delay + config.taps + 1)
    acc = np.zeros_like(spec)
    weight = np.zeros(frames)
    filters = None
    for i, start in enumerate(starts):
        stop = frames if i == len(starts) - 1 else min(frames, start + block)
        history = min(start, context)
        out, state = _wpe_frames(spec[:, :, start - history : stop], config, floor, history, filters)
        filters = state.filters
        w = np.ones(stop - start)
        if i > 0:
            ramp = min(overlap, stop - start)
            w[:ramp] = (np.arange(ramp) + 0.5) / ramp
        if i < len(starts) - 1:
            nxt = starts[i + 1]
            ramp = stop - nxt
            if ramp > 0:
                w[nxt - start :] = 1.0 - (np.arange(ramp) + 0.5) / ramp
        acc[:, :, start:stop] += out * w
        weight[start:stop] += w
    acc /= weight
    return _synthesize(acc, audio, config)
