"""Noise chunks cut from the non-speech parts of real recordings."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Iterable, List, Literal, Sequence

import numpy as np

from farfield.core.audio import AudioBuffer
from farfield.core.rng import SeededRng
from farfield.core.wavio import read_wav, write_wav
from farfield.errors import ConfigError, FormatError, NoNoiseAvailableError, RateError

CHUNK_SECONDS = 20.0


@dataclass(frozen=True)
class SegmentAnnotation:
    session_id: str
    start: float
    end: float
    speaker: str = ""
    kind: Literal["speech", "other"] = "speech"

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ConfigError(
                f"annotation needs 0 <= start < end, got [{self.start}, {self.end})"
            )


@dataclass(frozen=True, eq=False)
class NoiseChunk:
    audio: AudioBuffer
    session_id: str
    channel: int
    offset: float

    @property
    def chunk_id(self) -> str:
        return f"{self.session_id}_{self.channel}_{self.offset:.2f}"

    @property
    def filename(self) -> str:
        return f"{self.chunk_id}.wav"


def load_annotations(path) -> List[SegmentAnnotation]:
    """Read a JSON array of ``{session_id, start, end, speaker[, kind]}``.

    Times are seconds (numbers) or ``HH:MM:SS.ff`` strings.
    """
    with open(path, encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise FormatError(f"{path}: expected a JSON array of segments")
    out = []
    for i, rec in enumerate(records):
        try:
            out.append(
                SegmentAnnotation(
                    session_id=str(rec["session_id"]),
                    start=_seconds(rec["start"]),
                    end=_seconds(rec["end"]),
                    speaker=str(rec.get("speaker", "")),
                    kind=rec.get("kind", "speech"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: segment {i}: {exc}") from exc
    return out


def _seconds(value) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    h, m, s = str(value).split(":")
    return int(h) * 3600 + int(m) * 60 + float(s)


def speech_intervals(annotations: Iterable[SegmentAnnotation], sample_rate: int, n_frames: int):
    """Union of speech segments as sorted, disjoint ``[start, end)`` sample
    ranges, rounded outwards and clipped to the recording."""
    spans = sorted(
        (
            max(0, int(np.floor(a.start * sample_rate))),
            min(n_frames, int(np.ceil(a.end * sample_rate))),
        )
        for a in annotations
        if a.kind == "speech"
    )
    merged: list[list[int]] = []
    for lo, hi in spans:
        if lo >= hi:
            continue
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [tuple(s) for s in merged]


def extract_noise_chunks(
    recording: AudioBuffer,
    annotations: Sequence[SegmentAnnotation],
    chunk_seconds: float = CHUNK_SECONDS,
    *,
    session_id: str | None = None,
    channel: int = 0,
) -> List[NoiseChunk]:
    """Cut every gap between speech segments into back-to-back chunks of
    ``chunk_seconds``; whatever is left at the end of a gap is dropped.

    Only annotations of ``session_id`` are used when it is given.
    """
    sr = recording.sample_rate
    size = int(round(chunk_seconds * sr))
    if size <= 0:
        raise ConfigError("chunk_seconds must be positive")
    if session_id is not None:
        annotations = [a for a in annotations if a.session_id == session_id]
    session = session_id if session_id is not None else (
        annotations[0].session_id if annotations else "session"
    )
    samples = recording.samples[channel]
    speech = speech_intervals(annotations, sr, recording.frames)

    gaps, cursor = [], 0
    for lo, hi in speech:
        if lo > cursor:
            gaps.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < recording.frames:
        gaps.append((cursor, recording.frames))

    chunks = []
    for lo, hi in gaps:
        for start in range(lo, hi - size + 1, size):
            chunks.append(
                NoiseChunk(
                    AudioBuffer(samples[start : start + size], sr),
                    session,
                    channel,
                    start / sr,
                )
            )
    return chunks


def draw_chunk_indices(pool_size: int, target_frames: int, chunk_frames: int, gen: np.random.Generator) -> list[int]:
    if pool_size == 0:
        raise NoNoiseAvailableError("noise pool is empty")
    n_draws = -(-target_frames // chunk_frames) if target_frames > 0 else 0
    return [int(i) for i in gen.integers(0, pool_size, size=n_draws)]


def concatenate_chunks(chunks: Sequence[NoiseChunk], target_frames: int, sample_rate: int) -> AudioBuffer:
    if any(c.audio.sample_rate != sample_rate for c in chunks):
        raise RateError("noise chunk sample rate differs from target")
    if not chunks:
        return AudioBuffer(np.zeros((1, target_frames)), sample_rate)
    data = np.concatenate([c.audio.samples[0] for c in chunks])
    if data.size < target_frames:
        raise NoNoiseAvailableError("selected chunks are shorter than the target")
    return AudioBuffer(data[:target_frames], sample_rate)


def assemble_noise(
    chunks: Sequence[NoiseChunk],
    target_frames: int,
    rng: SeededRng,
    sample_rate: int | None = None,
) -> AudioBuffer:
    """Noise track of exactly ``target_frames``: chunks drawn uniformly with
    replacement, concatenated and cut to length."""
    if not chunks:
        raise NoNoiseAvailableError("noise pool is empty")
    sr = sample_rate or chunks[0].audio.sample_rate
    chunk_frames = min(c.audio.frames for c in chunks)
    idx = draw_chunk_indices(len(chunks), target_frames, chunk_frames, rng.generator())
    return concatenate_chunks([chunks[i] for i in idx], target_frames, sr)


_CHUNK_NAME = re.compile(r"^(?P<session>.+)_(?P<channel>\d+)_(?P<offset>\d+(?:\.\d+)?)\.wav$")


def save_noise_chunks(chunks: Sequence[NoiseChunk], directory) -> List[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for chunk in chunks:
        path = os.path.join(directory, chunk.filename)
        write_wav(chunk.audio, path, "float32")
        paths.append(path)
    return paths


def load_noise_pool(directory) -> List[NoiseChunk]:
    """Load ``{session}_{channel}_{offset}.wav`` files, sorted by name."""
    pool = []
    for name in sorted(os.listdir(directory)):
        match = _CHUNK_NAME.match(name)
        if not match:
            continue
        audio = read_wav(os.path.join(directory, name))
        pool.append(
            NoiseChunk(
                audio.channel(0),
                match["session"],
                int(match["channel"]),
                float(match["offset"]),
            )
        )
    return pool
