import struct

import numpy as np
import pytest

from specdiff.spectral import Waveform
from specdiff.wavio import WavFormatError, wav_read, wav_write

SR = 16000


def _random_wave(n=5000, seed=0):
    rng = np.random.default_rng(seed)
    return Waveform(0.8 * rng.uniform(-1.0, 1.0, n), SR)


class TestRoundTrips:
    def test_float32_is_bit_exact(self, tmp_path):
        w = _random_wave()
        # float32-representable payload: the file round trip must be exact
        w = Waveform(w.samples.astype(np.float32).astype(float), SR)
        path = tmp_path / "f32.wav"
        wav_write(path, w, fmt="float32")
        back = wav_read(path)
        assert back.sample_rate == SR
        assert np.array_equal(back.samples, w.samples)

    def test_pcm16_within_one_lsb(self, tmp_path):
        w = _random_wave(seed=1)
        path = tmp_path / "p16.wav"
        wav_write(path, w, fmt="pcm16")
        back = wav_read(path)
        assert float(np.max(np.abs(back.samples - w.samples))) <= 2.0 ** -15

    def test_pcm16_write_read_write_is_stable(self, tmp_path):
        w = _random_wave(seed=2)
        p1, p2 = tmp_path / "a.wav", tmp_path / "b.wav"
        wav_write(p1, w, fmt="pcm16")
        wav_write(p2, wav_read(p1), fmt="pcm16")
        assert p1.read_bytes() == p2.read_bytes()


class TestErrors:
    def test_missing_riff(self, tmp_path):
        path = tmp_path / "x.wav"
        path.write_bytes(b"JUNKJUNKJUNKJUNK")
        with pytest.raises(WavFormatError, match="RIFF"):
            wav_read(path)

    def test_not_wave(self, tmp_path):
        path = tmp_path / "x.wav"
        path.write_bytes(b"RIFF" + struct.pack("<I", 4) + b"AVI ")
        with pytest.raises(WavFormatError, match="WAVE"):
            wav_read(path)

    def test_missing_data_chunk_named(self, tmp_path):
        fmt = struct.pack("<HHIIHH", 1, 1, SR, SR * 2, 2, 16)
        blob = b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt)) + b"WAVE"
        blob += b"fmt " + struct.pack("<I", len(fmt)) + fmt
        path = tmp_path / "nodata.wav"
        path.write_bytes(blob)
        with pytest.raises(WavFormatError, match="missing 'data' chunk"):
            wav_read(path)

    def test_truncated_data_chunk(self, tmp_path):
        w = _random_wave(n=100, seed=3)
        path = tmp_path / "trunc.wav"
        wav_write(path, w, fmt="pcm16")
        whole = path.read_bytes()
        path.write_bytes(whole[:len(whole) - 50])
        with pytest.raises(WavFormatError, match="truncated"):
            wav_read(path)

    def test_stereo_rejected(self, tmp_path):
        fmt = struct.pack("<HHIIHH", 1, 2, SR, SR * 4, 4, 16)
        payload = b"\x00\x00" * 8
        blob = b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)) + b"WAVE"
        blob += b"fmt " + struct.pack("<I", len(fmt)) + fmt
        blob += b"data" + struct.pack("<I", len(payload)) + payload
        path = tmp_path / "stereo.wav"
        path.write_bytes(blob)
        with pytest.raises(WavFormatError, match="mono"):
            wav_read(path)

    def test_unsupported_codec(self, tmp_path):
        fmt = struct.pack("<HHIIHH", 7, 1, SR, SR, 1, 8)  # mu-law
        blob = b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8) + b"WAVE"
        blob += b"fmt " + struct.pack("<I", len(fmt)) + fmt
        blob += b"data" + struct.pack("<I", 0)
        path = tmp_path / "ulaw.wav"
        path.write_bytes(blob)
        with pytest.raises(WavFormatError, match="unsupported codec"):
            wav_read(path)

    def test_unknown_format_string(self, tmp_path):
        with pytest.raises(ValueError):
            wav_write(tmp_path / "x.wav", _random_wave(), fmt="mp3")


class TestExtras:
    def test_unknown_chunks_are_skipped(self, tmp_path):
        w = _random_wave(n=64, seed=4)
        path = tmp_path / "list.wav"
        wav_write(path, w, fmt="pcm16")
        raw = path.read_bytes()
        # splice a LIST chunk between fmt and data
        fmt_end = raw.index(b"data")
        extra = b"LIST" + struct.pack("<I", 4) + b"INFO"
        spliced = raw[:fmt_end] + extra + raw[fmt_end:]
        spliced = spliced[:4] + struct.pack("<I", len(spliced) - 8) + spliced[8:]
        path.write_bytes(spliced)
        back = wav_read(path)
        assert len(back.samples) == 64

    def test_resample_on_read_warns(self, tmp_path):
        tt = np.arange(8000) / 8000.0
        w = Waveform(0.5 * np.sin(2 * np.pi * 440.0 * tt), 8000)
        path = tmp_path / "8k.wav"
        wav_write(path, w, fmt="float32")
        with pytest.warns(UserWarning, match="resampling"):
            back = wav_read(path, target_rate=16000)
        assert back.sample_rate == 16000
        assert len(back.samples) == 16000
