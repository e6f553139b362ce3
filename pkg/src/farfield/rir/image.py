"""Image-source room impulse responses for shoebox rooms."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Optional

import numba
import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import signal

from farfield import __version__
from farfield.core.audio import AudioBuffer
from farfield.core.wavio import read_wav, write_wav
from farfield.errors import ConfigError, GeometryError, InsufficientDecayError
from farfield.rir.geometry import Point3, RoomSpec, check_inside
from farfield.rir.t60 import sabine_t60, t60_from_energy, t60_to_reflection

HIGHPASS_HZ = 80.0


class RirConfig(BaseModel):
    """Truncation and interpolation policy.

    ``max_order`` bounds the reflection count along each axis, so order 2
    keeps the 5 x 5 x 5 image box. With neither ``max_order`` nor
    ``duration`` set, the response is cut at ``tail_factor`` times the
    room's T60.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_order: Optional[int] = None
    duration: Optional[float] = None
    tail_factor: float = 1.25
    interp_half_width: int = 40
    highpass: bool = True
    wall_margin: float = 0.1
    t60_conversion: Literal["image", "sabine"] = "image"

    @model_validator(mode="after")
    def _check(self):
        if self.max_order is not None and self.max_order < 0:
            raise ConfigError("max_order must be >= 0")
        if self.duration is not None and not self.duration > 0:
            raise ConfigError("duration cutoff must be positive")
        if self.interp_half_width < 1:
            raise ConfigError("interp_half_width must be >= 1")
        if not self.tail_factor > 0:
            raise ConfigError("tail_factor must be positive")
        return self


@dataclass(frozen=True, eq=False)
class Rir:
    taps: np.ndarray
    sample_rate: int
    source: Point3
    mic: Point3
    room: Optional[RoomSpec] = None
    config: Optional[RirConfig] = None
    betas: Optional[tuple] = field(default=None)

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64).reshape(-1)
        if taps.size == 0:
            raise ValueError("impulse response must have at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("impulse response contains non-finite taps")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    def __len__(self):
        return self.taps.size

    def as_buffer(self) -> AudioBuffer:
        return AudioBuffer(self.taps, self.sample_rate)

    def metadata(self) -> dict:
        return {
            "generator": f"farfield {__version__}",
            "sample_rate": self.sample_rate,
            "length": int(self.taps.size),
            "source": list(self.source),
            "mic": list(self.mic),
            "room": None if self.room is None else self.room.model_dump(mode="json"),
            "betas": None if self.betas is None else list(self.betas),
            "config": None if self.config is None else self.config.model_dump(mode="json"),
        }


def _axis_images(
    src: float, mic: float, length: float, b0: float, b1: float, n_max: int, max_order: Optional[int] = None
):
    """Per-axis image offsets, reflection counts and wall gains.

    Image coordinate is ``(1 - 2p) * src + 2 n L`` for ``p`` in {0, 1} and
    ``|n| <= n_max``; it has met the near wall ``|n - p|`` times and the far
    wall ``|n|`` times. With ``max_order`` set, images reflected more than
    ``max_order`` times along this axis are dropped.
    """
    n = np.arange(-n_max, n_max + 1)
    offsets, orders, gains = [], [], []
    for p in (0, 1):
        offsets.append((1 - 2 * p) * src + 2 * n * length - mic)
        orders.append(np.abs(2 * n - p))
        gains.append(b0 ** np.abs(n - p).astype(float) * b1 ** np.abs(n).astype(float))
    offsets = np.concatenate(offsets)
    orders = np.concatenate(orders).astype(np.int64)
    gains = np.concatenate(gains)
    if max_order is not None:
        keep = orders <= max_order
        offsets, orders, gains = offsets[keep], orders[keep], gains[keep]
    return offsets, orders, gains


@numba.njit(cache=True)
def _accumulate(dx, gx, dy, gy, dz, gz, scale, half_width, out):
    length = out.shape[0]
    rot_c = math.cos(math.pi / half_width)
    rot_s = math.sin(math.pi / half_width)
    for i in range(dx.shape[0]):
        for j in range(dy.shape[0]):
            gxy = gx[i] * gy[j]
            dxy2 = dx[i] * dx[i] + dy[j] * dy[j]
            for k in range(dz.shape[0]):
                gain = gxy * gz[k]
                if gain == 0.0:
                    continue
                dist = math.sqrt(dxy2 + dz[k] * dz[k])
                tau = dist * scale
                if tau - half_width >= length:
                    continue
                amp = gain / (4.0 * math.pi * dist)
                lo = max(0, int(math.ceil(tau - half_width)))
                hi = min(length - 1, int(math.floor(tau + half_width)))
                if lo > hi:
                    continue
                # sin(pi (n - tau)) = (-1)^(n - n0) sin(pi (n0 - tau)) with n0 the
                # nearest tap; the window cosine is advanced by rotation
                n0 = int(math.floor(tau + 0.5))
                s_tau = math.sin(math.pi * (n0 - tau))
                sign = 1.0 if (lo - n0) % 2 == 0 else -1.0
                phase = math.pi * (lo - tau) / half_width
                wc = math.cos(phase)
                ws = math.sin(phase)
                for n in range(lo, hi + 1):
                    t = n - tau
                    if t == 0.0:
                        sinc = 1.0
                    else:
                        sinc = sign * s_tau / (math.pi * t)
                    out[n] += amp * 0.5 * (1.0 + wc) * sinc
                    sign = -sign
                    wc, ws = wc * rot_c - ws * rot_s, ws * rot_c + wc * rot_s


@numba.njit(cache=True)
def _energy_histogram(dx, ox, dy, oy, dz, oz, scale, out):
    """Energy ``1 / (4 pi d)^2`` binned by ``(reflection order, arrival
    sample)``; wall gains are applied by the caller."""
    length = out.shape[1]
    for i in range(dx.shape[0]):
        for j in range(dy.shape[0]):
            oxy = ox[i] + oy[j]
            dxy2 = dx[i] * dx[i] + dy[j] * dy[j]
            for k in range(dz.shape[0]):
                order = oxy + oz[k]
                dist = math.sqrt(dxy2 + dz[k] * dz[k])
                n = int(dist * scale)
                if n >= length:
                    continue
                amp = 1.0 / (4.0 * math.pi * dist)
                out[order, n] += amp * amp


def _n_max(max_order, reach, length_m):
    bounds = []
    if max_order is not None:
        bounds.append(max_order // 2 + 1)
    if reach is not None:
        bounds.append(int(math.ceil(reach / (2.0 * length_m))) + 1)
    return min(bounds)


# fixed, asymmetric positions (as fractions of each dimension) used to
# calibrate a room independently of where sources and mics end up
_CALIBRATION_SOURCE = (0.31, 0.42, 0.47)
_CALIBRATION_MIC = (0.68, 0.61, 0.55)


@lru_cache(maxsize=256)
def calibrated_reflection(room: RoomSpec, t60: float, sample_rate: int, config: RirConfig) -> tuple:
    """Uniform reflection coefficient whose image-method decay has Schroeder
    T60 equal to ``t60``.

    Image energies are binned once by reflection order and arrival time, so
    each trial coefficient costs one matrix-vector product; the coefficient is
    then found by bisection (predicted T60 increases with it).
    """
    t60_to_reflection(room, t60)  # feasibility under Sabine
    dims = np.asarray(room.dimensions, dtype=float)
    src = np.asarray(_CALIBRATION_SOURCE) * dims
    rcv = np.asarray(_CALIBRATION_MIC) * dims
    c = room.speed_of_sound
    duration = config.duration if config.duration is not None else config.tail_factor * t60
    n_taps = max(int(math.ceil(duration * sample_rate)), 2)
    reach = n_taps / sample_rate * c
    axes = [
        _axis_images(
            src[a], rcv[a], dims[a], 1.0, 1.0, _n_max(config.max_order, reach, dims[a]), config.max_order
        )
        for a in range(3)
    ]
    top = int(sum(ax[1].max() for ax in axes))
    hist = np.zeros((top + 1, n_taps))
    _energy_histogram(
        axes[0][0], axes[0][1], axes[1][0], axes[1][1], axes[2][0], axes[2][1],
        sample_rate / c, hist,
    )
    orders = np.arange(top + 1)

    def predicted(beta):
        try:
            return t60_from_energy((beta ** (2.0 * orders)) @ hist, sample_rate)
        except InsufficientDecayError:
            # near-lossless walls fail on too little decay, near-absorbing
            # ones on a decay too abrupt to fit
            return math.inf if beta > 0.5 else 0.0

    lo, hi = 1e-4, 1.0 - 1e-9
    if predicted(hi) <= t60:
        return (hi,) * 6
    if predicted(lo) >= t60:
        return (lo,) * 6
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if predicted(mid) < t60:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    return (beta,) * 6


def resolve_betas(room: RoomSpec, sample_rate: int, config: RirConfig) -> tuple:
    if room.reflection is not None:
        return tuple(float(b) for b in room.reflection)
    if config.t60_conversion == "sabine":
        return t60_to_reflection(room, room.t60)
    return calibrated_reflection(room, float(room.t60), int(sample_rate), config)


def _default_duration(room: RoomSpec, betas, config: RirConfig) -> Optional[float]:
    if config.duration is not None:
        return config.duration
    if config.max_order is not None:
        return None
    t60 = room.t60 if room.t60 is not None else sabine_t60(room, betas)
    if not math.isfinite(t60):
        raise ConfigError("lossless room needs an explicit duration or max_order")
    return config.tail_factor * t60


def generate_rir(
    room: RoomSpec,
    source: Point3,
    mic: Point3,
    sample_rate: int,
    config: RirConfig | None = None,
) -> Rir:
    """Impulse response from ``source`` to ``mic`` by the image method.

    Each image contributes ``prod(beta) / (4 pi d)`` at delay ``d / c``,
    placed with a Hann-windowed sinc fractional-delay kernel. Truncation
    follows ``config``; the optional 80 Hz high-pass is applied last.
    """
    config = config or RirConfig()
    check_inside(room, source, config.wall_margin, "source")
    check_inside(room, mic, config.wall_margin, "microphone")
    src = np.asarray(source, dtype=float)
    rcv = np.asarray(mic, dtype=float)
    if np.allclose(src, rcv, rtol=0.0, atol=1e-9):
        raise GeometryError("source and microphone coincide")

    betas = resolve_betas(room, sample_rate, config)
    c = room.speed_of_sound
    hw = config.interp_half_width
    duration = _default_duration(room, betas, config)
    direct = float(np.linalg.norm(src - rcv)) / c * sample_rate

    reach = None
    if duration is not None:
        n_taps = max(int(math.ceil(duration * sample_rate)), int(math.ceil(direct)) + hw + 1)
        reach = (n_taps + hw) / sample_rate * c
    axes = [
        _axis_images(
            src[a], rcv[a], room.dimensions[a], betas[2 * a], betas[2 * a + 1],
            _n_max(config.max_order, reach, room.dimensions[a]), config.max_order,
        )
        for a in range(3)
    ]

    if duration is None:
        # length set by the farthest admitted image
        d = np.sqrt(
            axes[0][0][:, None, None] ** 2
            + axes[1][0][None, :, None] ** 2
            + axes[2][0][None, None, :] ** 2
        )
        n_taps = int(math.floor(d.max() / c * sample_rate)) + hw + 1

    out = np.zeros(n_taps)
    _accumulate(
        axes[0][0], axes[0][2],
        axes[1][0], axes[1][2],
        axes[2][0], axes[2][2],
        sample_rate / c, float(hw), out,
    )
    if config.highpass:
        sos = signal.butter(2, HIGHPASS_HZ, btype="highpass", fs=sample_rate, output="sos")
        out = signal.sosfilt(sos, out)
    return Rir(out, sample_rate, tuple(map(float, src)), tuple(map(float, rcv)), room, config, tuple(betas))


def save_rir(rir: Rir, path) -> str:
    """Write ``rir`` as float32 WAV plus a ``.json`` sidecar; returns the sidecar path."""
    write_wav(rir.as_buffer(), path, "float32")
    sidecar = str(path)[: -len(".wav")] + ".json" if str(path).endswith(".wav") else f"{path}.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(rir.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


def load_rir(path) -> Rir:
    buf = read_wav(path)
    sidecar = str(path)[: -len(".wav")] + ".json" if str(path).endswith(".wav") else f"{path}.json"
    with open(sidecar, encoding="utf-8") as fh:
        meta = json.load(fh)
    return Rir(
        buf.samples[0],
        buf.sample_rate,
        tuple(meta["source"]),
        tuple(meta["mic"]),
        None if meta.get("room") is None else RoomSpec(**meta["room"]),
        None if meta.get("config") is None else RirConfig(**meta["config"]),
        None if meta.get("betas") is None else tuple(meta["betas"]),
    )
