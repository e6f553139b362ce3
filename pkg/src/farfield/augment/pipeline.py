from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from farfield.augment.mixing import convolve, mix_at_snr, normalize_intensity
from farfield.augment.noise import NoiseChunk, concatenate_chunks, draw_chunk_indices
from farfield.augment.scenario import NoiseSource, RoomScenario
from farfield.core.audio import AudioBuffer, power
from farfield.core.rng import SeededRng
from farfield.errors import NoNoiseAvailableError
from farfield.rir.image import RirConfig, generate_rir


@dataclass(frozen=True)
class MicComponents:
    """Powers of the two mixed components at one microphone, before the
    final intensity normalisation (which scales both equally)."""

    speech_power: float
    noise_power: float
    noise_gain: float
    output_scale: float

    @property
    def snr_db(self) -> float:
        if self.noise_power == 0:
            return float("inf")
        return float(10.0 * np.log10(self.speech_power / self.noise_power))


@dataclass(frozen=True)
class AugmentResult:
    audio: AudioBuffer
    scenario: RoomScenario
    components: List[MicComponents] = field(default_factory=list)


def _fit(buf: AudioBuffer, frames: int) -> AudioBuffer:
    data = buf.samples[:, :frames]
    if data.shape[1] < frames:
        data = np.pad(data, ((0, 0), (0, frames - data.shape[1])))
    return buf.with_samples(data)


def _select_chunks(source: NoiseSource, index: int, pool, frames: int, rng: SeededRng):
    if source.chunk_ids:
        by_id = {c.chunk_id: c for c in pool}
        missing = [cid for cid in source.chunk_ids if cid not in by_id]
        if missing:
            raise NoNoiseAvailableError(f"noise chunks not in pool: {missing}")
        return [by_id[cid] for cid in source.chunk_ids]
    chunk_frames = min(c.audio.frames for c in pool)
    gen = rng.derive(f"noise{index}").generator()
    return [pool[i] for i in draw_chunk_indices(len(pool), frames, chunk_frames, gen)]


def augment_utterance(
    clean: AudioBuffer,
    scenario: RoomScenario,
    noise_pool: Sequence[NoiseChunk],
    rng: SeededRng,
    rir_config: RirConfig | None = None,
) -> AugmentResult:
    """Simulate far-field capture of a close-talk utterance.

    At every microphone: the clean speech is convolved with the
    speaker-to-mic response, each point noise (a track of pooled chunks) with
    its own response, the noises are mixed in at ``scenario.snr_db`` and the
    result is rescaled to the clean utterance's RMS. Outputs keep the clean
    utterance's length, one channel per microphone.

    Noise sources that already list ``chunk_ids`` reuse those chunks, which
    is how a manifest record is replayed.
    """
    rir_config = rir_config or RirConfig()
    clean = clean.channel(0)
    frames, sr = clean.frames, clean.sample_rate
    if scenario.noise_sources and not noise_pool:
        raise NoNoiseAvailableError("scenario has noise sources but the pool is empty")

    chosen = [
        _select_chunks(src, i, noise_pool, frames, rng)
        for i, src in enumerate(scenario.noise_sources)
    ]
    noises = [concatenate_chunks(c, frames, sr) for c in chosen]
    sources = tuple(
        NoiseSource(position=src.position, chunk_ids=tuple(c.chunk_id for c in picks))
        for src, picks in zip(scenario.noise_sources, chosen)
    )
    scenario = scenario.model_copy(update={"noise_sources": sources})

    room = scenario.room
    channels, components = [], []
    for mic in scenario.mic_positions:
        h = generate_rir(room, scenario.speaker_position, mic, sr, rir_config)
        speech = _fit(convolve(clean, h), frames)
        rev_noises = [
            _fit(convolve(noise, generate_rir(room, src.position, mic, sr, rir_config)), frames)
            for src, noise in zip(sources, noises)
        ]
        mixed, gain = mix_at_snr(speech, rev_noises, scenario.snr_db, return_gain=True)
        out = normalize_intensity(mixed, clean)
        noise_power = 0.0
        if rev_noises:
            noise_sum = np.sum([n.samples[0] for n in rev_noises], axis=0)
            noise_power = power(gain * noise_sum)
        components.append(
            MicComponents(
                speech_power=power(speech.samples[0]),
                noise_power=noise_power,
                noise_gain=gain,
                output_scale=clean.rms() / mixed.rms(),
            )
        )
        channels.append(out.samples[0])
    return AugmentResult(AudioBuffer(np.stack(channels), sr), scenario, components)
