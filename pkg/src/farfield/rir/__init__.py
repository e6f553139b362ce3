from farfield.rir.geometry import Point3, RoomSpec, check_inside, uniform_point
from farfield.rir.image import (
    Rir,
    RirConfig,
    calibrated_reflection,
    generate_rir,
    load_rir,
    resolve_betas,
    save_rir,
)
from farfield.rir.t60 import energy_decay_curve, estimate_t60, sabine_t60, t60_to_reflection

__all__ = [
    "Point3",
    "Rir",
    "RirConfig",
    "RoomSpec",
    "calibrated_reflection",
    "check_inside",
    "energy_decay_curve",
    "estimate_t60",
    "generate_rir",
    "load_rir",
    "sabine_t60",
    "resolve_betas",
    "save_rir",
    "t60_to_reflection",
    "uniform_point",
]
