"""Random room scenarios for reverberation augmentation."""

from __future__ import annotations

from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from farfield.core.rng import SeededRng
from farfield.errors import ConfigError, GeometryError, InfeasibleT60Error, SamplerError
from farfield.rir.geometry import SABINE_CONSTANT, Point3, RoomSpec, check_inside
from farfield.rir.t60 import t60_to_reflection

MAX_NOISE_SOURCES = 3
SNR_RANGE = (0.0, 30.0)
T60_MAX = 0.9

# 4-mic linear array, offsets from the array centre in metres
DEFAULT_MIC_OFFSETS: Tuple[Point3, ...] = (
    (-0.1, 0.0, 0.0),
    (-0.0333, 0.0, 0.0),
    (0.0333, 0.0, 0.0),
    (0.1, 0.0, 0.0),
)


class NoiseSource(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    position: Point3
    chunk_ids: Tuple[str, ...] = ()


class RoomScenario(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    room: RoomSpec
    speaker_position: Point3
    mic_positions: Tuple[Point3, ...]
    t60: float
    noise_sources: Tuple[NoiseSource, ...] = ()
    snr_db: float
    master_seed: int
    stream_id: str
    wall_margin: float = 0.1

    @model_validator(mode="after")
    def _check(self):
        if len(self.noise_sources) > MAX_NOISE_SOURCES:
            raise ConfigError(f"at most {MAX_NOISE_SOURCES} noise sources")
        if not SNR_RANGE[0] <= self.snr_db <= SNR_RANGE[1]:
            raise ConfigError(f"snr_db {self.snr_db} outside {SNR_RANGE}")
        if not 0.0 < self.t60 <= T60_MAX:
            raise ConfigError(f"t60 {self.t60} outside (0, {T60_MAX}]")
        if not self.mic_positions:
            raise ConfigError("scenario needs at least one microphone")
        m = self.wall_margin
        check_inside(self.room, self.speaker_position, m, "speaker")
        for p in self.mic_positions:
            check_inside(self.room, p, m, "microphone")
        for src in self.noise_sources:
            check_inside(self.room, src.position, m, "noise source")
        return self

    @property
    def rng(self) -> SeededRng:
        return SeededRng(self.master_seed, self.stream_id)


class SamplerProfile(BaseModel):
    """Distributions a scenario is drawn from.

    ``chime5`` draws cube rooms and a truncated-Gaussian T60; ``synthetic``
    draws independent box dimensions and a uniform T60. Both share one
    sampling routine.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["chime5", "synthetic"] = "chime5"
    cube: bool = True
    room_edge_range: Tuple[float, float] = (3.0, 7.0)
    room_height_range: Optional[Tuple[float, float]] = None
    t60_distribution: Literal["truncated_gaussian", "uniform"] = "truncated_gaussian"
    t60_mean: float = 0.45
    t60_sd: float = 0.15
    t60_range: Tuple[float, float] = (0.05, 0.9)
    snr_range: Tuple[float, float] = SNR_RANGE
    noise_count_range: Tuple[int, int] = (0, MAX_NOISE_SOURCES)
    mic_positions: Optional[Tuple[Point3, ...]] = None
    mic_offsets: Tuple[Point3, ...] = DEFAULT_MIC_OFFSETS
    wall_margin: float = 0.1
    max_retries: int = 1000

    @model_validator(mode="after")
    def _check(self):
        lo, hi = self.room_edge_range
        if not 0 < lo <= hi:
            raise ConfigError("room_edge_range must be positive and ordered")
        if self.room_height_range is not None:
            hlo, hhi = self.room_height_range
            if not 0 < hlo <= hhi:
                raise ConfigError("room_height_range must be positive and ordered")
        tlo, thi = self.t60_range
        if not 0 < tlo < thi <= T60_MAX:
            raise ConfigError(f"t60_range must satisfy 0 < lo < hi <= {T60_MAX}")
        if self.t60_sd <= 0:
            raise ConfigError("t60_sd must be positive")
        slo, shi = self.snr_range
        if not SNR_RANGE[0] <= slo <= shi <= SNR_RANGE[1]:
            raise ConfigError(f"snr_range must lie within {SNR_RANGE}")
        nlo, nhi = self.noise_count_range
        if not 0 <= nlo <= nhi <= MAX_NOISE_SOURCES:
            raise ConfigError(f"noise_count_range must lie within [0, {MAX_NOISE_SOURCES}]")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")
        return self

    @classmethod
    def chime5(cls, **overrides) -> "SamplerProfile":
        return cls(name="chime5", **overrides)

    @classmethod
    def synthetic(cls, **overrides) -> "SamplerProfile":
        params = dict(
            name="synthetic",
            cube=False,
            room_edge_range=(3.0, 10.0),
            room_height_range=(2.5, 4.0),
            t60_distribution="uniform",
            t60_range=(0.2, 0.9),
        )
        params.update(overrides)
        return cls(**params)


def _draw_t60(profile: SamplerProfile, gen: np.random.Generator, floor: float = 0.0) -> float:
    """T60 in ``(max(lo, floor), hi]``; ``floor`` is the room's Sabine minimum."""
    lo, hi = profile.t60_range
    lo = max(lo, floor)
    if lo >= hi:
        raise InfeasibleT60Error(hi, floor)
    if profile.t60_distribution == "uniform":
        # half-open (lo, hi]
        return float(hi - gen.uniform(0.0, hi - lo))
    for _ in range(profile.max_retries):
        t = gen.normal(profile.t60_mean, profile.t60_sd)
        if lo < t <= hi:
            return float(t)
    raise SamplerError("truncated Gaussian T60 rejected too many draws")


def _draw_room(profile: SamplerProfile, gen: np.random.Generator) -> Tuple[float, float, float]:
    lo, hi = profile.room_edge_range
    if profile.cube:
        edge = float(gen.uniform(lo, hi))
        return (edge, edge, edge)
    lx, ly = (float(v) for v in gen.uniform(lo, hi, size=2))
    hlo, hhi = profile.room_height_range or profile.room_edge_range
    return (lx, ly, float(gen.uniform(hlo, hhi)))


def _uniform_inside(dims, margin, gen) -> Point3:
    p = gen.uniform(margin, np.asarray(dims) - margin)
    return (float(p[0]), float(p[1]), float(p[2]))


def _try_scenario(profile: SamplerProfile, rng: SeededRng, gen) -> RoomScenario:
    dims = _draw_room(profile, gen)
    # redraw T60 rather than the room so room sizes stay uniform
    volume = dims[0] * dims[1] * dims[2]
    surface = 2 * (dims[0] * dims[1] + dims[0] * dims[2] + dims[1] * dims[2])
    t60 = _draw_t60(profile, gen, SABINE_CONSTANT * volume / surface)
    margin = profile.wall_margin
    if min(dims) <= 2 * margin:
        raise GeometryError("room too small for wall margin")
    if profile.mic_positions is not None:
        mics = tuple(tuple(map(float, p)) for p in profile.mic_positions)
    else:
        extent = float(np.max(np.abs(profile.mic_offsets))) if profile.mic_offsets else 0.0
        if min(dims) <= 2 * (margin + extent):
            raise GeometryError("room too small for the microphone array")
        centre = np.asarray(_uniform_inside(dims, margin + extent, gen))
        mics = tuple(tuple(float(v) for v in centre + np.asarray(o)) for o in profile.mic_offsets)
    speaker = _uniform_inside(dims, margin, gen)
    nlo, nhi = profile.noise_count_range
    n_noise = int(gen.integers(nlo, nhi + 1))
    noises = tuple(
        NoiseSource(position=_uniform_inside(dims, margin, gen)) for _ in range(n_noise)
    )
    snr = float(gen.uniform(*profile.snr_range))
    room = RoomSpec(dimensions=dims, t60=t60)
    t60_to_reflection(room, t60)
    return RoomScenario(
        room=room,
        speaker_position=speaker,
        mic_positions=mics,
        t60=t60,
        noise_sources=noises,
        snr_db=snr,
        master_seed=rng.master_seed,
        stream_id=rng.stream_id,
        wall_margin=margin,
    )


def sample_scenario(profile: SamplerProfile, rng: SeededRng) -> RoomScenario:
    """Draw one scenario; candidates violating an invariant (mic array poking
    through a wall, T60 unreachable in the drawn room) are redrawn."""
    gen = rng.generator()
    last = None
    for _ in range(profile.max_retries):
        try:
            return _try_scenario(profile, rng, gen)
        except (GeometryError, InfeasibleT60Error, ConfigError, ValidationError) as exc:
            last = exc
    raise SamplerError(f"no valid scenario after {profile.max_retries} draws: {last}")
