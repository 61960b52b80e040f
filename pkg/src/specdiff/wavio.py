"""Mono RIFF/WAVE reading and writing (pcm16 and float32).

A small hand-rolled parser so malformed files fail with errors that
name the offending chunk instead of whatever a generic library raises.
pcm16 samples decode as n/32768; float32 round trips are bit-exact.
"""

from __future__ import annotations

import struct
import warnings

import numpy as np

from .spectral import Waveform


class WavFormatError(ValueError):
    """Malformed or unsupported RIFF/WAVE content."""


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) < n:
        raise WavFormatError(f"truncated file while reading {what}")
    return data


def wav_read(path, target_rate: int | None = None) -> Waveform:
    """Read a mono pcm16 or float32 WAV file.

    When target_rate is given and the file rate differs, the audio is
    resampled with a warning.
    """
    with open(path, "rb") as fh:
        riff = fh.read(12)
        if len(riff) < 12 or riff[:4] != b"RIFF":
            raise WavFormatError(f"{path}: missing RIFF header")
        if riff[8:12] != b"WAVE":
            raise WavFormatError(f"{path}: not a WAVE file")
        fmt = None
        data = None
        while True:
            head = fh.read(8)
            if len(head) == 0:
                break
            if len(head) < 8:
                raise WavFormatError(f"{path}: truncated chunk header")
            chunk_id, size = struct.unpack("<4sI", head)
            if chunk_id == b"fmt ":
                fmt = _read_exact(fh, size, f"{path}: 'fmt ' chunk")
            elif chunk_id == b"data":
                data = _read_exact(fh, size, f"{path}: 'data' chunk")
            else:
                fh.seek(size + (size & 1), 1)
                continue
            if size & 1:
                fh.seek(1, 1)
        if fmt is None:
            raise WavFormatError(f"{path}: missing 'fmt ' chunk")
        if data is None:
            raise WavFormatError(f"{path}: missing 'data' chunk")
    if len(fmt) < 16:
        raise WavFormatError(f"{path}: 'fmt ' chunk shorter than 16 bytes")
    audio_format, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if channels != 1:
        raise WavFormatError(f"{path}: only mono is supported, got {channels} channels")
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(float) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(float)
    else:
        raise WavFormatError(
            f"{path}: unsupported codec (format {audio_format}, {bits}-bit); "
            "expected pcm16 or float32"
        )
    w = Waveform(samples, sample_rate=int(rate))
    if target_rate is not None and w.sample_rate != target_rate:
        from .distort import resample_rate

        warnings.warn(
            f"{path}: resampling {w.sample_rate} Hz -> {target_rate} Hz",
            stacklevel=2,
        )
        w = resample_rate(w, target_rate)
    return w


def wav_write(path, w: Waveform, fmt: str = "float32") -> None:
    """Write a mono WAV file as pcm16 or float32."""
    if fmt == "pcm16":
        audio_format, bits = 1, 16
        clipped = np.clip(w.samples, -1.0, 32767.0 / 32768.0)
        payload = np.round(clipped * 32768.0).astype("<i2").tobytes()
    elif fmt == "float32":
        audio_format, bits = 3, 32
        payload = w.samples.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown format {fmt!r}; expected 'pcm16' or 'float32'")
    block_align = bits // 8
    fmt_chunk = struct.pack(
        "<HHIIHH", audio_format, 1, w.sample_rate,
        w.sample_rate * block_align, block_align, bits,
    )
    with open(path, "wb") as fh:
        fh.write(b"RIFF")
        fh.write(struct.pack("<I", 4 + 8 + len(fmt_chunk) + 8 + len(payload)))
        fh.write(b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)
        if len(payload) & 1:
            fh.write(b"\x00")
