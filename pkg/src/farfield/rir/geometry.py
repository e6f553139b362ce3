from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from farfield.errors import ConfigError, GeometryError

Point3 = Tuple[float, float, float]

# Sabine's constant 24 ln(10) / c for c = 343 m/s.
SABINE_CONSTANT = 0.1611


class RoomSpec(BaseModel):
    """Shoebox room: dimensions plus either six wall reflection
    coefficients ``(x0, x1, y0, y1, z0, z1)`` or a target T60."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dimensions: Point3
    reflection: Optional[Tuple[float, float, float, float, float, float]] = None
    t60: Optional[float] = None
    speed_of_sound: float = 343.0

    @field_validator("dimensions")
    @classmethod
    def _positive(cls, dims):
        if any(not d > 0 for d in dims):
            raise ConfigError(f"room dimensions must be positive, got {dims}")
        return dims

    @model_validator(mode="after")
    def _one_of(self):
        if (self.reflection is None) == (self.t60 is None):
            raise ConfigError("give exactly one of reflection coefficients or t60")
        if self.reflection is not None and any(
            not 0.0 <= b < 1.0 for b in self.reflection
        ):
            raise ConfigError("reflection coefficients must lie in [0, 1)")
        if self.t60 is not None and not self.t60 > 0:
            raise ConfigError("t60 must be positive")
        if not self.speed_of_sound > 0:
            raise ConfigError("speed of sound must be positive")
        return self

    @classmethod
    def cube(cls, edge: float, **kwargs) -> "RoomSpec":
        return cls(dimensions=(edge, edge, edge), **kwargs)

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface_area(self) -> float:
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def wall_areas(self) -> np.ndarray:
        lx, ly, lz = self.dimensions
        return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])


def check_inside(room: RoomSpec, point, margin: float = 0.1, what: str = "point") -> None:
    p = np.asarray(point, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise GeometryError(f"{what} must be three finite coordinates, got {point!r}")
    dims = np.asarray(room.dimensions)
    if np.any(p < margin) or np.any(p > dims - margin):
        raise GeometryError(
            f"{what} {tuple(p)} is not inside room {room.dimensions} "
            f"with {margin} m wall margin"
        )


def uniform_point(room: RoomSpec, gen: np.random.Generator, margin: float = 0.1) -> Point3:
    dims = np.asarray(room.dimensions)
    if np.any(dims <= 2 * margin):
        raise GeometryError(f"room {room.dimensions} too small for {margin} m margin")
    p = gen.uniform(margin, dims - margin)
    return (float(p[0]), float(p[1]), float(p[2]))
