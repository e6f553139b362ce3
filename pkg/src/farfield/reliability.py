"""Reliable-region selection from first-pass word confidences.

Words decoded with full lattice posterior and short duration are taken as
trustworthy single-speaker speech; their merged time spans (and a per-frame
0/1 mask) select the statistics used for a second i-vector estimate.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from itertools import groupby
from typing import Dict, FrozenSet, Iterable, List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from farfield.errors import ConfigError, FormatError

POSTERIOR_TOLERANCE = 1e-6

DEFAULT_EXCLUDED = frozenset(
    {
        "<eps>",
        "<sil>",
        "!SIL",
        "SIL",
        "sil",
        "<unk>",
        "<UNK>",
        "<noise>",
        "[noise]",
        "<spoken_noise>",
        "[laughs]",
        "[inaudible]",
        "[vocalized-noise]",
        # common hesitation and backchannel fillers
        "uh",
        "um",
        "umm",
        "hmm",
        "mm",
        "mhm",
        "mm-hmm",
        "umm-hmm",
        "uh-huh",
    }
)


@dataclass(frozen=True)
class CtmEntry:
    utterance_id: str
    channel: str
    start: float
    duration: float
    word: str
    posterior: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"CTM entry duration must be positive, got {self.duration}")
        if not 0.0 <= self.posterior <= 1.0:
            raise ConfigError(f"posterior {self.posterior} outside [0, 1]")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True, order=True)
class ReliableRegion:
    utterance_id: str
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ConfigError(f"region needs start < end, got [{self.start}, {self.end})")

    @property
    def duration(self) -> float:
        return self.end - self.start


class ReliabilityRule(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    min_posterior: float = 1.0
    max_duration: float = 1.0
    excluded_tokens: FrozenSet[str] = DEFAULT_EXCLUDED

    @field_validator("excluded_tokens", mode="before")
    @classmethod
    def _as_set(cls, v):
        return frozenset(v)

    @model_validator(mode="after")
    def _check(self):
        if not 0.0 <= self.min_posterior <= 1.0:
            raise ConfigError("min_posterior must lie in [0, 1]")
        if not self.max_duration > 0:
            raise ConfigError("max_duration must be positive")
        return self

    def accepts(self, entry: CtmEntry) -> bool:
        return (
            entry.posterior >= self.min_posterior - POSTERIOR_TOLERANCE
            and entry.duration < self.max_duration
            and entry.word not in self.excluded_tokens
        )


def _merge(intervals) -> List[tuple]:
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [tuple(m) for m in merged]


def select_reliable_regions(entries: Iterable[CtmEntry], rule: ReliabilityRule | None = None) -> List[ReliableRegion]:
    """Keep entries passing ``rule`` and merge touching or overlapping spans
    per utterance. Output is sorted by utterance, then start."""
    rule = rule or ReliabilityRule()
    kept = sorted(
        (e.utterance_id, e.start, e.end) for e in entries if rule.accepts(e)
    )
    regions = []
    for utt, group in groupby(kept, key=lambda r: r[0]):
        for lo, hi in _merge((s, e) for _, s, e in group):
            regions.append(ReliableRegion(utt, lo, hi))
    return regions


def frame_mask(regions: Sequence[ReliableRegion], utterance_duration: float, frame_shift: float = 0.01) -> np.ndarray:
    """0/1 weight per frame: 1 when the frame centre falls in a region.

    Frame ``f`` spans ``[f*shift, (f+1)*shift)``; there are
    ``ceil(duration / shift)`` frames. Regions running past the utterance
    are clipped with a warning.
    """
    if not frame_shift > 0:
        raise ConfigError("frame_shift must be positive")
    n = max(0, math.ceil(utterance_duration / frame_shift - 1e-9))
    mask = np.zeros(n, dtype=np.int8)
    centres = (np.arange(n) + 0.5) * frame_shift
    for r in regions:
        end = r.end
        if end > utterance_duration + 1e-9:
            warnings.warn(
                f"region [{r.start}, {r.end}) of {r.utterance_id} runs past "
                f"utterance end {utterance_duration}; clipping",
                stacklevel=2,
            )
            end = utterance_duration
        mask[(centres >= r.start) & (centres < end)] = 1
    return mask


def parse_ctm(lines: Iterable[str], source: str = "<ctm>") -> List[CtmEntry]:
    """Parse ``utt chan start dur word posterior`` lines; blank lines and
    ``;;`` comments are skipped."""
    entries = []
    for lineno, line in enumerate(lines, 1):
        text = line.strip()
        if not text or text.startswith(";;"):
            continue
        fields = text.split()
        if len(fields) != 6:
            raise FormatError(f"{source}:{lineno}: expected 6 fields, got {len(fields)}")
        utt, chan, start, dur, word, post = fields
        try:
            entries.append(CtmEntry(utt, chan, float(start), float(dur), word, float(post)))
        except ValueError as exc:
            raise FormatError(f"{source}:{lineno}: {exc}") from exc
    return entries


def read_ctm(path) -> List[CtmEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_ctm(fh, str(path))


def format_regions(regions: Sequence[ReliableRegion]) -> str:
    return "".join(f"{r.utterance_id} {r.start:.3f} {r.end:.3f}\n" for r in regions)


def masks_by_utterance(
    regions: Sequence[ReliableRegion],
    durations: Dict[str, float],
    frame_shift: float = 0.01,
) -> Dict[str, List[int]]:
    by_utt: Dict[str, list] = {u: [] for u in durations}
    for r in regions:
        by_utt.setdefault(r.utterance_id, []).append(r)
    return {
        utt: frame_mask(regs, durations[utt], frame_shift).tolist()
        for utt, regs in sorted(by_utt.items())
    }


def write_masks(masks: Dict[str, List[int]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(masks, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
