"""Subcommand implementations. Each returns the manifest records it wrote."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence

import numpy as np

from farfield.augment.noise import (
    extract_noise_chunks,
    load_annotations,
    load_noise_pool,
    save_noise_chunks,
)
from farfield.augment.pipeline import augment_utterance
from farfield.augment.scenario import sample_scenario
from farfield.beamform import delay_and_sum, estimate_tdoa, save_track
from farfield.cli.config import PipelineConfig
from farfield.cli.manifest import checksum
from farfield.core.audio import AudioBuffer
from farfield.core.rng import SeededRng
from farfield.core.wavio import read_wav, write_wav
from farfield.errors import DataError, FormatError
from farfield.reliability import (
    format_regions,
    masks_by_utterance,
    read_ctm,
    select_reliable_regions,
    write_masks,
)
from farfield.rir.image import generate_rir
from farfield.wpe import wpe_block_online, wpe_dereverberate

log = logging.getLogger("farfield")


def run_jobs(fn: Callable, jobs: Sequence, workers: int) -> list:
    """Map ``fn`` over ``jobs`` preserving order; ``workers`` only changes
    wall time."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


# -- rir-gen -----------------------------------------------------------------


def _rir_job(job):
    index, config, out_dir = job
    seed = config.require_seed()
    stream = f"rir/{index:06d}"
    scenario = sample_scenario(config.profile, SeededRng(seed, stream))
    sr = config.io.sample_rate
    records = []
    for m, mic in enumerate(scenario.mic_positions):
        rir = generate_rir(scenario.room, scenario.speaker_position, mic, sr, config.rir)
        name = f"rir_{index:06d}_m{m}"
        wav = os.path.join(out_dir, name + ".wav")
        write_wav(rir.as_buffer(), wav, "float32")
        meta = rir.metadata()
        meta["scenario"] = scenario.model_dump(mode="json")
        meta["mic_index"] = m
        with open(os.path.join(out_dir, name + ".json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        records.append(
            {
                "input": "",
                "output": name + ".wav",
                "sidecar": name + ".json",
                "stream_id": stream,
                "params": {"scenario": meta["scenario"], "mic_index": m},
                "checksum": checksum(wav),
                "sidecar_checksum": checksum(os.path.join(out_dir, name + ".json")),
            }
        )
    return records


def cmd_rir_gen(config: PipelineConfig, count: int, out_dir: str) -> List[dict]:
    config.require_seed()
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(i, config, out_dir) for i in range(count)]
    records = [r for batch in run_jobs(_rir_job, jobs, config.workers) for r in batch]
    log.info("rir-gen done", extra={"fields": {"count": count, "files": len(records)}})
    return records


# -- extract-noise -----------------------------------------------------------


def _load_list(path, key):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get(key, [])
    if not isinstance(data, list):
        raise FormatError(f"{path}: expected a list of records")
    return data


def _resolve(base, path):
    return path if os.path.isabs(path) else os.path.join(base, path)


def cmd_extract_noise(config: PipelineConfig, recordings_path: str, annotations_path: str, out_dir: str) -> List[dict]:
    recordings = _load_list(recordings_path, "recordings")
    annotations = load_annotations(annotations_path)
    base = os.path.dirname(os.path.abspath(recordings_path))
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for rec in recordings:
        try:
            session, rel = str(rec["session_id"]), rec["path"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{recordings_path}: bad recording record {rec!r}") from exc
        audio = read_wav(_resolve(base, rel))
        chunks = extract_noise_chunks(
            audio,
            annotations,
            config.noise.chunk_seconds,
            session_id=session,
            channel=config.noise.channel,
        )
        for chunk, path in zip(chunks, save_noise_chunks(chunks, out_dir)):
            records.append(
                {
                    "input": rel,
                    "output": os.path.basename(path),
                    "stream_id": None,
                    "params": {
                        "session_id": chunk.session_id,
                        "channel": chunk.channel,
                        "offset": chunk.offset,
                    },
                    "checksum": checksum(path),
                }
            )
    log.info("extract-noise done", extra={"fields": {"chunks": len(records)}})
    return records


# -- augment -----------------------------------------------------------------


def _augment_job(job):
    utt, base, noise_dir, config, out_dir = job
    seed = config.require_seed()
    rel = utt["path"]
    clean = read_wav(_resolve(base, rel))
    clean = clean.channel(config.augment.input_channel)
    if clean.frames == 0:
        raise DataError(f"{rel}: empty utterance")
    if config.augment.resample_per_utterance:
        scenario_stream = f"scenario/{rel}"
    else:
        scenario_stream = f"scenario/session/{utt.get('session_id', '')}"
    scenario = sample_scenario(config.profile, SeededRng(seed, scenario_stream))
    pool = load_noise_pool(noise_dir) if noise_dir else []
    if scenario.noise_sources and not pool:
        scenario = scenario.model_copy(update={"noise_sources": ()})
        log.warning("no noise pool; dropping noise sources", extra={"fields": {"input": rel}})
    result = augment_utterance(clean, scenario, pool, SeededRng(seed, f"noise/{rel}"), config.rir)

    uid = utt.get("id") or os.path.splitext(os.path.basename(rel))[0]
    records = []
    for m, comp in enumerate(result.components):
        name = f"{uid}_m{m}.wav"
        path = os.path.join(out_dir, name)
        write_wav(result.audio.channel(m), path, config.io.encoding)
        records.append(
            {
                "input": rel,
                "output": name,
                "stream_id": scenario_stream,
                "params": {
                    "utterance_id": uid,
                    "mic_index": m,
                    "scenario": result.scenario.model_dump(mode="json"),
                    "speech_power": comp.speech_power,
                    "noise_power": comp.noise_power,
                    "noise_gain": comp.noise_gain,
                    "output_scale": comp.output_scale,
                },
                "checksum": checksum(path),
            }
        )
    return records


def cmd_augment(config: PipelineConfig, input_manifest: str, noise_dir: str | None, out_dir: str) -> List[dict]:
    seed = config.require_seed()
    utterances = _load_list(input_manifest, "utterances")
    for u in utterances:
        if not isinstance(u, dict) or "path" not in u:
            raise FormatError(f"{input_manifest}: utterance record needs a 'path': {u!r}")
    utterances = sorted(utterances, key=lambda u: u["path"])
    subset = config.augment.subset
    if subset is not None and subset < len(utterances):
        gen = SeededRng(seed, "subset").generator()
        keep = np.sort(gen.choice(len(utterances), size=subset, replace=False))
        utterances = [utterances[i] for i in keep]
    base = os.path.dirname(os.path.abspath(input_manifest))
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(u, base, noise_dir, config, out_dir) for u in utterances]
    records = [r for batch in run_jobs(_augment_job, jobs, config.workers) for r in batch]
    log.info("augment done", extra={"fields": {"utterances": len(jobs), "files": len(records)}})
    return records


# -- enhance -----------------------------------------------------------------


def enhance(audio: AudioBuffer, config: PipelineConfig, *, use_wpe=True, use_beamform=True, block_seconds=None):
    """WPE on all channels, then delay-and-sum to mono. Returns
    ``(mono, wpe_state_or_None, track_or_None)``."""
    if audio.frames == 0:
        raise DataError("input has no samples")
    state = track = None
    if use_wpe:
        if block_seconds:
            audio = wpe_block_online(audio, config.wpe, block_seconds)
        else:
            audio, state = wpe_dereverberate(audio, config.wpe)
    ref = config.beamform.reference_channel
    if not use_beamform or audio.channels == 1:
        return audio.channel(ref if ref < audio.channels else 0), state, track
    track = estimate_tdoa(audio, config=config.beamform)
    return delay_and_sum(audio, track, config.beamform.weights), state, track


def cmd_enhance(
    config: PipelineConfig,
    input_path: str,
    output_path: str,
    *,
    use_wpe=True,
    use_beamform=True,
    block_seconds=None,
    cost_out=None,
    tdoa_out=None,
) -> List[dict]:
    audio = read_wav(input_path)
    mono, state, track = enhance(
        audio, config, use_wpe=use_wpe, use_beamform=use_beamform, block_seconds=block_seconds
    )
    out_dir = os.path.dirname(os.path.abspath(output_path))
    os.makedirs(out_dir, exist_ok=True)
    write_wav(mono, output_path, config.io.encoding)
    if cost_out and state is not None:
        with open(cost_out, "w", encoding="utf-8") as fh:
            json.dump(state.to_json(), fh, indent=2)
            fh.write("\n")
    if tdoa_out and track is not None:
        save_track(track, tdoa_out)
    return [
        {
            "input": os.path.basename(input_path),
            "output": os.path.basename(output_path),
            "stream_id": None,
            "params": {"wpe": use_wpe, "beamform": use_beamform, "block_seconds": block_seconds},
            "checksum": checksum(output_path),
        }
    ]


# -- select-reliable -----------------------------------------------------------


def _read_utt2dur(path):
    durations = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'utt duration'")
            try:
                durations[fields[0]] = float(fields[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return durations


def cmd_select_reliable(
    config: PipelineConfig,
    ctm_path: str,
    regions_out: str,
    *,
    mask_out=None,
    utt2dur=None,
    frame_shift=0.01,
) -> List[dict]:
    entries = read_ctm(ctm_path)
    regions = select_reliable_regions(entries, config.reliability)
    for path in (regions_out, mask_out):
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(regions_out, "w", encoding="utf-8") as fh:
        fh.write(format_regions(regions))
    records = [
        {
            "input": os.path.basename(ctm_path),
            "output": os.path.basename(regions_out),
            "stream_id": None,
            "params": {"kind": "regions", "count": len(regions)},
            "checksum": checksum(regions_out),
        }
    ]
    if mask_out:
        if utt2dur:
            durations = _read_utt2dur(utt2dur)
        else:
            durations = {}
            for e in entries:
                durations[e.utterance_id] = max(durations.get(e.utterance_id, 0.0), e.end)
        write_masks(masks_by_utterance(regions, durations, frame_shift), mask_out)
        records.append(
            {
                "input": os.path.basename(ctm_path),
                "output": os.path.basename(mask_out),
                "stream_id": None,
                "params": {"kind": "mask", "frame_shift": frame_shift},
                "checksum": checksum(mask_out),
            }
        )
    log.info("select-reliable done", extra={"fields": {"entries": len(entries), "regions": len(regions)}})
    return records
