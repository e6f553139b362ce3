"""GCC-PHAT delay tracking and weighted delay-and-sum beamforming."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from farfield.core.audio import AudioBuffer
from farfield.errors import ConfigError, FormatError

CROSSFADE_SECONDS = 0.010


class BeamformConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    segment_seconds: float = 0.5
    hop_seconds: float = 0.25
    max_delay_ms: float = 10.0
    reference_channel: int = 0
    smoothing: bool = True
    jump_penalty: float = 0.02
    n_candidates: int = 4
    weights: Union[str, List[float]] = "equal"

    @model_validator(mode="after")
    def _check(self):
        if not self.segment_seconds > 0 or not self.hop_seconds > 0:
            raise ConfigError("segment and hop lengths must be positive")
        if self.max_delay_ms < 0:
            raise ConfigError("max_delay_ms must be >= 0")
        if isinstance(self.weights, str) and self.weights not in ("equal", "confidence"):
            raise ConfigError("weights must be 'equal', 'confidence' or a list")
        return self


@dataclass
class TdoaTrack:
    """Per-segment delays (samples, relative to the reference channel) and
    GCC-PHAT peak confidences, both shaped ``(segments, channels)``."""

    starts: np.ndarray
    delays: np.ndarray
    confidence: np.ndarray
    sample_rate: int
    segment_frames: int
    reference_channel: int = 0

    @property
    def segments(self) -> int:
        return len(self.starts)

    def to_json(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "segment_frames": self.segment_frames,
            "reference_channel": self.reference_channel,
            "segments": [
                {
                    "start": int(s),
                    "start_seconds": float(s) / self.sample_rate,
                    "delay": [float(d) for d in delay],
                    "confidence": [float(c) for c in conf],
                }
                for s, delay, conf in zip(self.starts, self.delays, self.confidence)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TdoaTrack":
        try:
            segs = data["segments"]
            channels = len(segs[0]["delay"]) if segs else 1
            return cls(
                starts=np.array([s["start"] for s in segs], dtype=np.int64),
                delays=np.array([s["delay"] for s in segs], dtype=float).reshape(-1, channels),
                confidence=np.array([s["confidence"] for s in segs], dtype=float).reshape(-1, channels),
                sample_rate=int(data["sample_rate"]),
                segment_frames=int(data["segment_frames"]),
                reference_channel=int(data.get("reference_channel", 0)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"bad TDOA track: {exc}") from exc


def _segment_starts(frames: int, seg: int, hop: int) -> np.ndarray:
    if frames <= seg:
        return np.array([0], dtype=np.int64)
    starts = list(range(0, frames - seg + 1, hop))
    if starts[-1] + seg < frames:
        starts.append(frames - seg)
    return np.array(starts, dtype=np.int64)


def _gcc_phat(ref: np.ndarray, sig: np.ndarray, max_lag: int, nfft: int) -> np.ndarray:
    """PHAT-weighted cross-correlation at lags ``-max_lag..max_lag``; a
    positive lag means ``sig`` lags ``ref``."""
    cross = np.fft.rfft(sig, nfft) * np.conj(np.fft.rfft(ref, nfft))
    mag = np.abs(cross)
    cross = np.where(mag > 1e-12 * max(mag.max(), 1e-300), cross / np.maximum(mag, 1e-300), 0.0)
    cc = np.fft.irfft(cross, nfft)
    return np.concatenate([cc[-max_lag:], cc[: max_lag + 1]]) if max_lag else cc[:1].copy(), cc


def _parabolic(values: np.ndarray, i: int) -> float:
    if 0 < i < len(values) - 1:
        a, b, c = values[i - 1], values[i], values[i + 1]
        den = a - 2 * b + c
        if den < 0:
            return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))
    return 0.0


def _viterbi(cands: np.ndarray, scores: np.ndarray, penalty: float) -> np.ndarray:
    """Pick one candidate lag per segment maximising total score minus
    ``penalty`` per sample of delay change."""
    n_seg, n_c = cands.shape
    total = scores[0].copy()
    back = np.zeros((n_seg, n_c), dtype=np.int64)
    for s in range(1, n_seg):
        trans = total[:, None] - penalty * np.abs(cands[s - 1][:, None] - cands[s][None, :])
        back[s] = np.argmax(trans, axis=0)
        total = trans[back[s], np.arange(n_c)] + scores[s]
    path = np.zeros(n_seg, dtype=np.int64)
    path[-1] = int(np.argmax(total))
    for s in range(n_seg - 1, 0, -1):
        path[s - 1] = back[s, path[s]]
    return path


def estimate_tdoa(
    audio: AudioBuffer,
    segment_seconds: float = 0.5,
    max_delay_ms: float = 10.0,
    *,
    config: BeamformConfig | None = None,
) -> TdoaTrack:
    """Track each channel's delay against the reference by GCC-PHAT.

    Delays are the correlation peak within ``+-max_delay_ms`` refined by
    parabolic interpolation; confidence is the peak divided by the RMS norm
    of the whole correlation (1 for identical channels). Single-channel
    input yields an all-zero track.
    """
    config = config or BeamformConfig(segment_seconds=segment_seconds, max_delay_ms=max_delay_ms)
    sr = audio.sample_rate
    ref_ch = config.reference_channel
    if not 0 <= ref_ch < audio.channels:
        raise ConfigError(f"reference channel {ref_ch} out of range")
    seg = max(1, int(round(config.segment_seconds * sr)))
    hop = max(1, int(round(config.hop_seconds * sr)))
    starts = _segment_starts(audio.frames, seg, hop)
    n_seg, channels = len(starts), audio.channels
    delays = np.zeros((n_seg, channels))
    conf = np.ones((n_seg, channels))
    if channels == 1 or audio.frames == 0:
        return TdoaTrack(starts, delays, conf, sr, seg, ref_ch)

    max_lag = min(int(np.floor(config.max_delay_ms * 1e-3 * sr)), max(seg - 1, 0))
    nfft = 1 << int(np.ceil(np.log2(2 * seg)))
    lags = np.arange(-max_lag, max_lag + 1)
    n_cand = min(config.n_candidates, len(lags))
    for ch in range(channels):
        if ch == ref_ch:
            continue
        cands = np.zeros((n_seg, n_cand), dtype=np.int64)
        scores = np.zeros((n_seg, n_cand))
        frac = np.zeros((n_seg, n_cand))
        energy = np.zeros(n_seg)
        for s, start in enumerate(starts):
            ref = audio.samples[ref_ch, start : start + seg]
            sig = audio.samples[ch, start : start + seg]
            window, full = _gcc_phat(ref, sig, max_lag, nfft)
            energy[s] = np.sqrt(np.sum(full * full))
            order = np.argsort(-window, kind="stable")[:n_cand]
            cands[s] = order
            scores[s] = window[order]
            frac[s] = [_parabolic(window, int(i)) for i in order]
        if config.smoothing and n_seg > 1:
            pick = _viterbi(lags[cands].astype(float), scores, config.jump_penalty)
        else:
            pick = np.zeros(n_seg, dtype=np.int64)
        rows = np.arange(n_seg)
        delays[:, ch] = lags[cands[rows, pick]] + frac[rows, pick]
        peak = np.maximum(scores[rows, pick], 0.0)
        conf[:, ch] = np.where(energy > 0, np.minimum(peak / np.maximum(energy, 1e-300), 1.0), 0.0)
    return TdoaTrack(starts, delays, conf, sr, seg, ref_ch)


def _normalized_weights(weights, track: TdoaTrack, channels: int) -> np.ndarray:
    if isinstance(weights, str):
        if weights == "equal":
            w = np.ones(channels)
        elif weights == "confidence":
            w = np.mean(track.confidence, axis=0)
        else:
            raise ConfigError(f"unknown weighting {weights!r}")
    else:
        w = np.asarray(weights, dtype=float)
    if w.shape != (channels,):
        raise ConfigError(f"need {channels} weights, got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError("weights must be finite and non-negative")
    if not w.sum() > 0:
        raise ConfigError("weights must not all be zero")
    # rounding makes the result independent of an overall scale factor
    w = np.round(w / w.sum(), 12)
    return w / w.sum()


def _shift(x: np.ndarray, delay: float) -> np.ndarray:
    """Advance ``x`` by ``delay`` samples (fractional, band-limited)."""
    if delay == 0.0:
        return x
    n = len(x)
    nfft = 1 << int(np.ceil(np.log2(max(2 * n, 2))))
    freqs = np.fft.rfftfreq(nfft)
    spec = np.fft.rfft(x, nfft) * np.exp(2j * np.pi * freqs * delay)
    return np.fft.irfft(spec, nfft)[:n]


def delay_and_sum(
    audio: AudioBuffer,
    track: TdoaTrack,
    weights: Union[str, Sequence[float]] = "equal",
) -> AudioBuffer:
    """Align every channel on the reference using the tracked delays and
    average with normalised weights.

    Each segment owns the samples from its start to the next segment's
    start; neighbouring segment outputs are cross-faded linearly over 10 ms
    around each boundary. Output length equals input length.
    """
    channels, frames, sr = audio.channels, audio.frames, audio.sample_rate
    w = _normalized_weights(weights, track, channels)
    if channels == 1:
        return audio.channel(0)
    if track.delays.shape[1] != channels:
        raise ConfigError("track channel count does not match audio")

    bounds = [int(s) for s in track.starts[1:]] + [frames]
    owners = [0] + bounds[:-1]
    half = int(round(CROSSFADE_SECONDS * sr / 2))
    pad = int(np.ceil(np.max(np.abs(track.delays)))) + 2 * half + 64
    out = np.zeros(frames)
    for k, (lo, hi) in enumerate(zip(owners, bounds)):
        if hi <= lo:
            continue
        a = max(0, lo - (half if k > 0 else 0))
        b = min(frames, hi + (half if k < len(bounds) - 1 else 0))
        ctx_lo, ctx_hi = max(0, a - pad), min(frames, b + pad)
        seg = np.zeros(b - a)
        for ch in range(channels):
            if w[ch] == 0:
                continue
            x = audio.samples[ch, ctx_lo:ctx_hi]
            seg += w[ch] * _shift(x, float(track.delays[k, ch]))[a - ctx_lo : b - ctx_lo]
        fade = np.ones(b - a)
        if k > 0 and half > 0:
            n = min(2 * half, b - a)
            fade[:n] = (np.arange(n) + 0.5) / (2 * half)
        if k < len(bounds) - 1 and half > 0:
            n = min(2 * half, b - a)
            fade[-n:] = np.minimum(fade[-n:], 1.0 - (np.arange(n) + 0.5) / (2 * half))
        out[a:b] += seg * fade
    return AudioBuffer(out, sr)


def save_track(track: TdoaTrack, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(track.to_json(), fh, indent=2)
        fh.write("\n")


def load_track(path) -> TdoaTrack:
    with open(path, encoding="utf-8") as fh:
        return TdoaTrack.from_json(json.load(fh))
