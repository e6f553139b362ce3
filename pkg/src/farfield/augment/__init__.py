from farfield.augment.mixing import (
    DEFAULT_SPEED_FACTORS,
    convolve,
    mix_at_snr,
    normalize_intensity,
    random_volume_factor,
    speed_perturb,
    volume_perturb,
)
from farfield.augment.noise import (
    NoiseChunk,
    SegmentAnnotation,
    assemble_noise,
    extract_noise_chunks,
    load_annotations,
    load_noise_pool,
    save_noise_chunks,
)
from farfield.augment.pipeline import AugmentResult, MicComponents, augment_utterance
from farfield.augment.scenario import NoiseSource, RoomScenario, SamplerProfile, sample_scenario

__all__ = [
    "AugmentResult",
    "DEFAULT_SPEED_FACTORS",
    "MicComponents",
    "NoiseChunk",
    "NoiseSource",
    "RoomScenario",
    "SamplerProfile",
    "SegmentAnnotation",
    "assemble_noise",
    "augment_utterance",
    "convolve",
    "extract_noise_chunks",
    "load_annotations",
    "load_noise_pool",
    "mix_at_snr",
    "normalize_intensity",
    "random_volume_factor",
    "sample_scenario",
    "save_noise_chunks",
    "speed_perturb",
    "volume_perturb",
]
