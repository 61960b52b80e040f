import io
import math

import numpy as np
import pytest

from specdiff.metrics import (
    MetricReport,
    lsd,
    report,
    si_snr_db,
    snr_db,
    spectrogram_ssim,
)
from specdiff.spectral import StftConfig, Waveform, stft

from oracles import lsd_double_loop

SR = 16000


def _speech_like_mag(seed: int = 0, shape=(40, 257)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    frames = np.arange(shape[0])[:, None]
    bins = np.arange(shape[1])[None, :]
    formants = sum(np.exp(-0.5 * ((bins - c) / 12.0) ** 2) for c in (30, 80, 150))
    envelope = 0.6 + 0.4 * np.sin(2 * math.pi * frames / 16.0)
    return envelope * formants + 0.05 * rng.random(shape)


class TestLsd:
    def test_identity(self):
        spec = _speech_like_mag().astype(complex)
        assert lsd(spec, spec) == 0.0

    def test_constant_ratio_e(self):
        ref = np.full((8, 16), math.e)
        est = np.ones((8, 16))
        assert lsd(ref, est) == pytest.approx(2.0, rel=1e-12)

    def test_scale_law(self):
        ref = _speech_like_mag(1) + 0.1
        for s in (0.5, 2.0, 7.0):
            assert lsd(ref, s * ref) == pytest.approx(2.0 * abs(math.log(s)), rel=1e-9)

    def test_symmetry(self):
        a = _speech_like_mag(2) + 0.1
        b = _speech_like_mag(3) + 0.1
        assert lsd(a, b) == pytest.approx(lsd(b, a), rel=1e-14)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            ref = rng.random((6, 17)) * (1 + 1j * rng.random((6, 17)))
            est = rng.random((6, 17)) * (1 + 1j * rng.random((6, 17)))
            ours = lsd(ref, est, floor=1e-8)
            brute = lsd_double_loop(ref, est, floor=1e-8)
            assert ours == pytest.approx(brute, rel=1e-10), trial

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            lsd(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_floor_validation(self):
        with pytest.raises(ValueError):
            lsd(np.ones((2, 2)), np.ones((2, 2)), floor=0.0)


class TestSsim:
    def test_identical_is_one(self):
        mag = _speech_like_mag(5)
        assert spectrogram_ssim(mag, mag) == pytest.approx(1.0, abs=1e-9)

    def test_zero_estimate_scores_low(self):
        mag = _speech_like_mag(6)
        val = spectrogram_ssim(mag, np.zeros_like(mag))
        assert 0.0 < val < 0.5

    def test_constant_images_luminance_closed_form(self):
        a, b = 0.8, 0.5
        ref = np.full((10, 10), a)
        est = np.full((10, 10), b)
        c1 = (0.01 * 1.0) ** 2  # constant reference: dynamic range falls back to 1
        expected = (2 * a * b + c1) / (a * a + b * b + c1)
        assert spectrogram_ssim(ref, est) == pytest.approx(expected, rel=1e-12)

    def test_bounded_above_by_one(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            ref = rng.random((12, 20))
            est = rng.random((12, 20))
            assert spectrogram_ssim(ref, est) <= 1.0 + 1e-12

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            spectrogram_ssim(np.full((8, 8), -1.0), np.ones((8, 8)))


class TestSnr:
    def _wave(self, seed=0, n=4000):
        return Waveform(np.random.default_rng(seed).standard_normal(n), SR)

    def test_identical_hits_the_cap(self):
        w = self._wave()
        assert snr_db(w, w) == 300.0
        assert si_snr_db(w, w) == 300.0

    def test_scale_invariance_contrast(self):
        w = self._wave(1)
        doubled = Waveform(2.0 * w.samples, SR)
        assert snr_db(w, doubled) == pytest.approx(0.0, abs=1e-12)
        assert si_snr_db(w, doubled) == 300.0

    def test_known_orthogonal_noise_power(self):
        n = 4096
        tt = np.arange(n)
        ref = Waveform(np.sin(2 * math.pi * tt * 8 / n), SR)
        noise = np.cos(2 * math.pi * tt * 8 / n)  # orthogonal, equal power
        for scale in (0.5, 0.1):
            est = Waveform(ref.samples + scale * noise, SR)
            expected = 10.0 * math.log10(1.0 / scale ** 2)
            assert snr_db(ref, est) == pytest.approx(expected, abs=1e-6)
            assert si_snr_db(ref, est) == pytest.approx(expected, abs=1e-6)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            snr_db(Waveform(np.zeros(10), SR), self._wave(2, 10))


class TestReport:
    def test_csv_round_numbers(self):
        rng = np.random.default_rng(8)
        ref = Waveform(0.4 * rng.standard_normal(SR), SR)
        est = Waveform(ref.samples + 0.01 * rng.standard_normal(SR), SR)
        cfg = StftConfig()
        rep = report(ref, est, stft(ref, cfg), stft(est, cfg))
        buf = io.StringIO()
        rep.write_csv(buf, "demo")
        lines = buf.getvalue().splitlines()
        assert lines[0] == "file_id,lsd,ssim,snr_db,si_snr_db"
        fields = lines[1].split(",")
        assert fields[0] == "demo"
        assert float(fields[1]) == rep.lsd
        assert float(fields[2]) == rep.ssim

    def test_validation(self):
        with pytest.raises(ValueError):
            MetricReport(lsd=-1.0, ssim=0.5, snr_db=0.0, si_snr_db=0.0)
        with pytest.raises(ValueError):
            MetricReport(lsd=0.0, ssim=1.5, snr_db=0.0, si_snr_db=0.0)
