from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from farfield.errors import DataError, ShapeError


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Multichannel audio, channel-major ``(channels, frames)`` float64.

    The sample array is made read-only on construction so a buffer can be
    shared between threads without copying.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64, copy=True)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:
            raise ShapeError(f"expected (channels, frames), got shape {data.shape}")
        if data.shape[0] < 1:
            raise ShapeError("audio buffer needs at least one channel")
        if not np.all(np.isfinite(data)):
            raise DataError("audio samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise DataError(f"invalid sample rate {self.sample_rate!r}")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.frames / self.sample_rate

    def channel(self, index: int) -> "AudioBuffer":
        return AudioBuffer(self.samples[index : index + 1], self.sample_rate)

    def with_samples(self, samples: np.ndarray) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)

    def rms(self) -> float:
        if self.samples.size == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def __eq__(self, other):
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(
            self.samples, other.samples
        )

    def __repr__(self):
        return (
            f"AudioBuffer(channels={self.channels}, frames={self.frames}, "
            f"sample_rate={self.sample_rate})"
        )


def power(samples: np.ndarray) -> float:
    """Mean power of a 1-D signal over its full duration."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return 0.0
    return float(np.mean(samples * samples))
