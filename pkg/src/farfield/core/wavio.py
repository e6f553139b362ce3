"""RIFF/WAVE reading and writing for PCM16, PCM24 and IEEE float32."""

from __future__ import annotations

import os
import struct

import numpy as np

from farfield.core.audio import AudioBuffer
from farfield.errors import FormatError, UnsupportedFormatError

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE

ENCODINGS = ("pcm16", "pcm24", "float32")


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        if body + size > len(data):
            raise FormatError(f"chunk {chunk_id!r} runs past end of file")
        yield chunk_id, data[body : body + size]
        pos = body + size + (size & 1)


def read_wav(path) -> AudioBuffer:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for chunk_id, body in _iter_chunks(data):
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = body
        elif chunk_id == b"data":
            payload = body
            break
    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise FormatError(f"{path}: missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise FormatError(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels == 0 or rate == 0:
        raise FormatError(f"{path}: zero channels or sample rate")
    if block_align != channels * bits // 8:
        raise FormatError(f"{path}: block align {block_align} inconsistent with format")

    nframes = len(payload) // block_align
    raw = payload[: nframes * block_align]
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        samples = ints.astype(np.float64) / float(1 << 23)
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported encoding (format tag {tag:#06x}, {bits} bits)"
        )
    return AudioBuffer(samples.reshape(nframes, channels).T, rate)


def _quantize(samples: np.ndarray, bits: int) -> np.ndarray:
    full = float(1 << (bits - 1))
    ints = np.rint(samples * full)
    return np.clip(ints, -full, full - 1).astype(np.int32)


def encode_wav(buffer: AudioBuffer, encoding: str = "float32") -> bytes:
    interleaved = buffer.samples.T
    if encoding == "pcm16":
        tag, bits = _WAVE_FORMAT_PCM, 16
        payload = _quantize(interleaved, 16).astype("<i2").tobytes()
    elif encoding == "pcm24":
        tag, bits = _WAVE_FORMAT_PCM, 24
        ints = _quantize(interleaved, 24).astype("<i4").reshape(-1)
        payload = ints.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
    elif encoding == "float32":
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
        payload = interleaved.astype("<f4").tobytes()
    else:
        raise UnsupportedFormatError(f"unknown encoding {encoding!r}")

    channels = buffer.channels
    block_align = channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH",
        tag,
        channels,
        buffer.sample_rate,
        buffer.sample_rate * block_align,
        block_align,
        bits,
    )
    pad = b"\x00" if len(payload) & 1 else b""
    body = (
        b"WAVE"
        + b"fmt "
        + struct.pack("<I", len(fmt))
        + fmt
        + b"data"
        + struct.pack("<I", len(payload))
        + payload
        + pad
    )
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(buffer: AudioBuffer, path, encoding: str = "float32") -> None:
    """Write ``buffer`` to ``path``.

    PCM encodings clip to ``[-1, 1 - lsb]`` and round to nearest. The file is
    written to a temporary name and renamed so readers never see a partial
    file.
    """
    blob = encode_wav(buffer, encoding)
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
