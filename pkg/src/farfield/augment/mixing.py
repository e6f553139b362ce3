from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import signal

from farfield.core.audio import AudioBuffer, power
from farfield.errors import ConfigError, DegenerateSignalError, RateError, ShapeError
from farfield.rir.image import Rir

VOLUME_RANGE = (0.8, 2.0)
SPEED_RANGE = (0.5, 2.0)
DEFAULT_SPEED_FACTORS = (0.9, 1.0, 1.1)


def convolve(sig: AudioBuffer, rir: Rir | AudioBuffer) -> AudioBuffer:
    """Full linear convolution of every channel with a single-channel
    response, by FFT overlap-add. Output has ``len(x) + len(h) - 1`` frames."""
    if isinstance(rir, AudioBuffer):
        taps, rate = rir.samples[0], rir.sample_rate
    else:
        taps, rate = rir.taps, rir.sample_rate
    if rate != sig.sample_rate:
        raise RateError(f"signal at {sig.sample_rate} Hz, response at {rate} Hz")
    if sig.frames == 0:
        return AudioBuffer(np.zeros((sig.channels, 0)), sig.sample_rate)
    out = signal.oaconvolve(sig.samples, taps[np.newaxis, :], mode="full", axes=1)
    return AudioBuffer(out, sig.sample_rate)


def snr_gain(speech: np.ndarray, noise: np.ndarray, snr_db: float) -> float:
    """Gain on ``noise`` that puts it ``snr_db`` below ``speech`` in mean power."""
    p_speech = power(speech)
    p_noise = power(noise)
    if p_speech <= 0:
        raise DegenerateSignalError("speech has zero power")
    if p_noise <= 0:
        raise DegenerateSignalError("noise has zero power; cannot reach a finite SNR")
    return float(np.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(
    reverberant_speech: AudioBuffer,
    reverberant_noises: Sequence[AudioBuffer],
    snr_db: float,
    *,
    return_gain: bool = False,
):
    """Sum the noises, scale the sum so channel-0 full-duration powers give
    ``snr_db``, and add it to the speech. With no noises the speech is
    returned unchanged (gain 0)."""
    if not reverberant_noises:
        return (reverberant_speech, 0.0) if return_gain else reverberant_speech
    for n in reverberant_noises:
        if n.sample_rate != reverberant_speech.sample_rate:
            raise RateError("noise and speech sample rates differ")
        if n.samples.shape != reverberant_speech.samples.shape:
            raise ShapeError(
                f"noise shape {n.samples.shape} != speech shape {reverberant_speech.samples.shape}"
            )
    noise_sum = np.sum([n.samples for n in reverberant_noises], axis=0)
    gain = snr_gain(reverberant_speech.samples[0], noise_sum[0], snr_db)
    mixed = reverberant_speech.with_samples(reverberant_speech.samples + gain * noise_sum)
    return (mixed, gain) if return_gain else mixed


def normalize_intensity(mixed: AudioBuffer, reference: AudioBuffer) -> AudioBuffer:
    """Rescale ``mixed`` so its RMS matches the RMS of ``reference``."""
    rms = mixed.rms()
    if rms <= 0:
        raise DegenerateSignalError("cannot normalise a silent signal")
    return mixed.with_samples(mixed.samples * (reference.rms() / rms))


def speed_perturb(audio: AudioBuffer, factor: float) -> AudioBuffer:
    """Play ``audio`` ``factor`` times faster (pitch shifts with it).

    Band-limited polyphase resampling by the rational approximation of
    ``factor``; the output keeps the nominal sample rate and has
    ``floor(frames / factor)`` frames.
    """
    if not SPEED_RANGE[0] <= factor <= SPEED_RANGE[1]:
        raise ConfigError(f"speed factor {factor} outside {SPEED_RANGE}")
    if factor == 1.0:
        return audio
    ratio = Fraction(factor).limit_denominator(1000)
    n_out = int(np.floor(audio.frames / factor))
    if audio.frames == 0:
        return audio.with_samples(np.zeros((audio.channels, 0)))
    out = signal.resample_poly(audio.samples, ratio.denominator, ratio.numerator, axis=1)
    if out.shape[1] < n_out:
        out = np.pad(out, ((0, 0), (0, n_out - out.shape[1])))
    return audio.with_samples(out[:, :n_out])


def volume_perturb(audio: AudioBuffer, factor: float) -> AudioBuffer:
    """Multiply by ``factor`` in [0.8, 2.0]; no clipping here."""
    if not VOLUME_RANGE[0] <= factor <= VOLUME_RANGE[1]:
        raise ConfigError(f"volume factor {factor} outside {VOLUME_RANGE}")
    if factor == 1.0:
        return audio
    return audio.with_samples(audio.samples * factor)


def random_volume_factor(gen: np.random.Generator) -> float:
    return float(gen.uniform(*VOLUME_RANGE))
