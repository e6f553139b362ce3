from __future__ import annotations

import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from farfield.augment.scenario import SamplerProfile
from farfield.beamform import BeamformConfig
from farfield.errors import ConfigError
from farfield.reliability import ReliabilityRule
from farfield.rir.image import RirConfig
from farfield.wpe import WpeConfig


class IoConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    encoding: Literal["pcm16", "pcm24", "float32"] = "float32"
    sample_rate: int = 16000


class AugmentOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # False: one scenario per session, shared by all its utterances
    resample_per_utterance: bool = True
    input_channel: int = 0
    subset: Optional[int] = None


class NoiseOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    chunk_seconds: float = 20.0
    channel: int = 0


class PipelineConfig(BaseModel):
    """Everything a command needs. Echoed into every manifest, except
    ``workers`` which never changes results."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    master_seed: Optional[int] = None
    workers: int = Field(default=1, ge=1)
    profile: SamplerProfile = Field(default_factory=SamplerProfile)
    rir: RirConfig = Field(default_factory=RirConfig)
    wpe: WpeConfig = Field(default_factory=WpeConfig)
    beamform: BeamformConfig = Field(default_factory=BeamformConfig)
    reliability: ReliabilityRule = Field(default_factory=ReliabilityRule)
    io: IoConfig = Field(default_factory=IoConfig)
    augment: AugmentOptions = Field(default_factory=AugmentOptions)
    noise: NoiseOptions = Field(default_factory=NoiseOptions)

    def echo(self) -> dict:
        data = self.model_dump(mode="json", exclude={"workers"})
        data["reliability"]["excluded_tokens"] = sorted(data["reliability"]["excluded_tokens"])
        return data

    def require_seed(self) -> int:
        if self.master_seed is None:
            raise ConfigError("this command samples random quantities; give --seed or master_seed")
        return self.master_seed


def load_config(path: Optional[str], **overrides) -> PipelineConfig:
    data = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
