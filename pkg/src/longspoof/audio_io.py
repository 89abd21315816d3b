"""Mono 16 kHz WAV loading and writing.

This is the only module that touches audio files.  Input that is not
already mono 16 kHz PCM is rejected rather than converted: the pipeline
never resamples or downmixes behind the caller's back.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

PIPELINE_RATE = 16000
INT16_SCALE = 32768.0


class AudioIoError(Exception):
    pass


class NotWavError(AudioIoError):
    """File is not a RIFF/WAVE container."""


class UnsupportedFormatError(AudioIoError):
    """WAV encoding the pipeline does not accept; caller must pre-convert."""


class IoFailure(AudioIoError):
    """Filesystem read or write failed."""


@dataclass
class AudioBuffer:
    """Mono PCM samples (float64 in [-1, 1]) plus their sample rate."""

    samples: np.ndarray
    sample_rate: int = PIPELINE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise NotWavError(f"truncated file while reading {what}")
    return data


def _parse_wav(fh):
    """Parse a RIFF/WAVE stream down to (format-code, channels, rate, width, data bytes)."""
    header = fh.read(12)
    if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
        raise NotWavError("missing RIFF/WAVE magic")
    fmt = None
    data = None
    while True:
        chunk_header = fh.read(8)
        if len(chunk_header) < 8:
            break
        chunk_id, size = struct.unpack("<4sI", chunk_header)
        if chunk_id == b"fmt ":
            body = _read_exact(fh, size, "fmt chunk")
            if size < 16:
                raise NotWavError("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            data = _read_exact(fh, size, "data chunk")
        else:
            fh.seek(size + (size & 1), os.SEEK_CUR)
            continue
        if size & 1:
            fh.seek(1, os.SEEK_CUR)
        if fmt is not None and data is not None:
            break
    if fmt is None:
        raise NotWavError("no fmt chunk")
    if data is None:
        raise NotWavError("no data chunk")
    code, channels, rate, _byte_rate, _block_align, bits = fmt
    return code, channels, rate, bits, data


def wav_info(path) -> tuple[int, int]:
    """Return (frame count, sample rate) from the file header without decoding samples."""
    try:
        with open(path, "rb") as fh:
            code, channels, rate, bits, data = _parse_wav(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    width = bits // 8
    if width == 0 or channels == 0:
        raise UnsupportedFormatError(f"{path}: zero sample width or channel count")
    return len(data) // (width * channels), rate


def load_wav(path) -> AudioBuffer:
    """Load a mono 16 kHz 16-bit-int or 32-bit-float PCM WAV file.

    Integer samples are mapped to [-1, 1] by division by 32768.  Anything
    else (other rates, stereo, other encodings) raises
    UnsupportedFormatError so the caller knows to convert up front.
    """
    try:
        with open(path, "rb") as fh:
            code, channels, rate, bits, data = _parse_wav(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, expected mono")
    if rate != PIPELINE_RATE:
        raise UnsupportedFormatError(f"{path}: sample rate {rate}, expected {PIPELINE_RATE}")
    if code == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / INT16_SCALE
    elif code == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: format code {code} at {bits} bits; expected 16-bit PCM or 32-bit float"
        )
    if samples.size == 0:
        raise UnsupportedFormatError(f"{path}: empty data chunk")
    if not np.all(np.isfinite(samples)):
        raise UnsupportedFormatError(f"{path}: non-finite sample values")
    return AudioBuffer(samples, rate)


def quantize_int16(samples: np.ndarray) -> np.ndarray:
    """Clamp to [-1, 1 - 1/32768] and round to int16 codes."""
    clipped = np.clip(samples, -1.0, 1.0 - 1.0 / INT16_SCALE)
    return np.rint(clipped * INT16_SCALE).astype("<i2")


def save_wav(buf: AudioBuffer, path) -> None:
    """Write 16-bit PCM mono WAV, atomically (temp file + rename)."""
    codes = quantize_int16(buf.samples)
    payload = codes.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        buf.sample_rate,
        buf.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc
