"""Reverberation-time conversion and measurement."""

from __future__ import annotations

import math

import numpy as np

from farfield.errors import ConfigError, InfeasibleT60Error, InsufficientDecayError
from farfield.rir.geometry import SABINE_CONSTANT, RoomSpec


def t60_to_reflection(room: RoomSpec, t60: float) -> tuple[float, ...]:
    """Uniform wall reflection coefficient from the inverted Sabine formula.

    ``alpha = 0.1611 V / (S T60)`` and ``beta = sqrt(1 - alpha)`` for all six
    walls. Raises :class:`InfeasibleT60Error` when ``alpha >= 1``.
    """
    if not t60 > 0:
        raise ConfigError("t60 must be positive")
    if math.isinf(t60):
        return (1.0,) * 6
    minimum = SABINE_CONSTANT * room.volume / room.surface_area
    alpha = minimum / t60
    if alpha >= 1.0:
        raise InfeasibleT60Error(t60, minimum)
    beta = math.sqrt(1.0 - alpha)
    return (beta,) * 6


def sabine_t60(room: RoomSpec, betas) -> float:
    """Sabine reverberation time for per-wall reflection coefficients."""
    alpha = 1.0 - np.asarray(betas, dtype=float) ** 2
    absorption = float(np.dot(room.wall_areas(), alpha))
    if absorption <= 0:
        return math.inf
    return SABINE_CONSTANT * room.volume / absorption


def energy_decay_curve(taps: np.ndarray) -> np.ndarray:
    """Schroeder backward-integrated energy, in dB relative to total energy."""
    energy = np.asarray(taps, dtype=float) ** 2
    edc = np.cumsum(energy[::-1])[::-1]
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(edc / edc[0])


def estimate_t60(rir, sample_rate: int | None = None, *, fit_range=(-5.0, -25.0)) -> float:
    """T60 from a linear fit to the Schroeder decay between -5 and -25 dB.

    ``rir`` is an :class:`~farfield.rir.image.Rir` or a 1-D tap array (then
    ``sample_rate`` is required). The fitted 20 dB decay time is scaled by 3.
    """
    if sample_rate is None:
        taps, sample_rate = rir.taps, rir.sample_rate
    else:
        taps = rir
    taps = np.asarray(taps, dtype=float)
    return t60_from_energy(taps * taps, sample_rate, fit_range=fit_range)


def t60_from_energy(energy: np.ndarray, sample_rate: int, *, fit_range=(-5.0, -25.0)) -> float:
    """Schroeder T60 from a per-sample energy envelope (squared taps)."""
    energy = np.asarray(energy, dtype=float)
    if energy.size == 0 or not np.any(energy):
        raise InsufficientDecayError("impulse response has no energy")
    edc = np.cumsum(energy[::-1])[::-1]
    with np.errstate(divide="ignore"):
        edc = 10.0 * np.log10(edc / edc[0])
    hi, lo = fit_range
    # the integrated curve always plunges at the truncation point, so the
    # usable range is judged on a block envelope instead
    block = max(1, sample_rate // 200)
    usable = energy.size // block * block
    if usable >= 2 * block:
        env = energy[:usable].reshape(-1, block).mean(axis=1)
        tail = env[-1]
        if tail > 0 and 10.0 * math.log10(env.max() / tail) < hi - lo:
            raise InsufficientDecayError(
                f"envelope decays {10.0 * math.log10(env.max() / tail):.1f} dB, need {hi - lo:.0f} dB"
            )
    start = int(np.argmax(edc <= hi))
    below = edc <= lo
    if not np.any(below) or edc[-1] > lo:
        raise InsufficientDecayError(f"decay does not reach {lo} dB")
    stop = int(np.argmax(below))
    # need a finite decay segment spanning several samples
    if stop - start < 2 or not np.isfinite(edc[stop - 1]):
        raise InsufficientDecayError(
            f"decay from {hi} to {lo} dB spans {stop - start} samples"
        )
    t = np.arange(start, stop) / sample_rate
    slope, _ = np.polyfit(t, edc[start:stop], 1)
    if not slope < 0:
        raise InsufficientDecayError("energy decay curve does not decrease")
    return float(-60.0 / slope)
