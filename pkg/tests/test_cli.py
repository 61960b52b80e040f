import math

import numpy as np
import pytest

from specdiff.cli import main
from specdiff.metrics import snr_db
from specdiff.spectral import Waveform
from specdiff.wavio import wav_read, wav_write

SR = 16000


@pytest.fixture
def speech_file(tmp_path):
    rng = np.random.default_rng(0)
    tt = np.arange(SR) / SR
    envelope = 0.5 * (1.0 + np.sin(2 * math.pi * 2.5 * tt))
    voiced = sum(a * np.sin(2 * math.pi * f * tt)
                 for a, f in ((0.25, 180.0), (0.15, 360.0), (0.08, 720.0)))
    samples = envelope * voiced + 0.01 * rng.standard_normal(SR)
    path = tmp_path / "speech.wav"
    wav_write(path, Waveform(samples, SR), fmt="float32")
    return path


def test_usage_error_exits_1(capsys):
    assert main(["kernel-check", "--bogus-flag"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_no_command_exits_1():
    assert main([]) == 1


def test_kernel_check_passes_with_paper_params(tmp_path, capsys):
    out_csv = tmp_path / "traj.csv"
    code = main(["kernel-check", "--sde", "bbed", "--paths", "30000",
                 "--steps", "400", "--seed", "0", "--out", str(out_csv)])
    captured = capsys.readouterr().out
    assert code == 0
    assert "PASS" in captured
    assert out_csv.read_text().startswith("t,mean,variance")


def test_kernel_check_detects_wrong_closed_form(capsys):
    # mismatched parameters between simulation and comparison cannot happen
    # through the CLI, so force a failure with a tiny path count where the
    # Monte-Carlo noise exceeds the 2% gate
    code = main(["kernel-check", "--paths", "20", "--steps", "150", "--seed", "3"])
    assert code == 2


def test_simulate_forward_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--mode", "forward", "--paths", "500", "--steps", "200",
            "--seed", "11"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_reverse_writes_grid(tmp_path):
    out = tmp_path / "rev.csv"
    code = main(["simulate", "--mode", "reverse", "--paths", "200", "--steps", "25",
                 "--trs", "0.12", "--seed", "5", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,mean,variance"
    assert len(lines) == 4  # three reverse steps from 0.12 at width 0.04


class TestEnhance:
    def test_oracle_collapse_alpha_one(self, tmp_path, speech_file):
        out = tmp_path / "enh.wav"
        code = main(["enhance", "--in", str(speech_file), "--out", str(out),
                     "--pred", "oracle", "--score", "oracle",
                     "--clean", str(speech_file), "--alpha", "1.0", "--seed", "4"])
        assert code == 0
        clean = wav_read(speech_file)
        enhanced = wav_read(out)
        assert snr_db(clean, enhanced) >= 100.0

    def test_byte_identical_reruns(self, tmp_path, speech_file):
        a, b = tmp_path / "a.wav", tmp_path / "b.wav"
        args = ["enhance", "--in", str(speech_file), "--pred", "identity",
                "--score", "oracle", "--clean", str(speech_file), "--seed", "9"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_oracle_without_clean_is_a_validation_error(self, tmp_path, speech_file, capsys):
        code = main(["enhance", "--in", str(speech_file),
                     "--out", str(tmp_path / "x.wav"), "--pred", "oracle"])
        assert code == 2
        assert "requires --clean" in capsys.readouterr().err

    def test_config_file_plus_flag_override(self, tmp_path, speech_file, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("fusion.alpha = 0.9\nseed = 2\nschedule.t_rs = 0.08\n")
        out = tmp_path / "enh.wav"
        code = main(["enhance", "--in", str(speech_file), "--out", str(out),
                     "--config", str(cfg), "--alpha", "0.4", "--score", "analytic"])
        assert code == 0
        header = capsys.readouterr().out
        assert "# fusion.alpha = 0.4" in header    # flag wins
        assert "# schedule.t_rs = 0.08" in header  # file value survives

    def test_model_score_round_trip(self, tmp_path, speech_file):
        model = tmp_path / "net.bin"
        assert main(["train-toy", "--out", str(model), "--epochs", "1",
                     "--samples", "256", "--hidden", "16", "--seed", "1"]) == 0
        out = tmp_path / "enh.wav"
        code = main(["enhance", "--in", str(speech_file), "--out", str(out),
                     "--score", f"model:{model}", "--seed", "2"])
        assert code == 0
        assert len(wav_read(out).samples) == SR


def test_distort_with_pools_and_log(tmp_path, speech_file):
    noise_dir = tmp_path / "noise"
    rir_dir = tmp_path / "rir"
    noise_dir.mkdir()
    rir_dir.mkdir()
    rng = np.random.default_rng(7)
    wav_write(noise_dir / "n0.wav", Waveform(0.2 * rng.standard_normal(SR), SR),
              fmt="float32")
    rir = np.zeros(400)
    rir[0], rir[120] = 1.0, 0.4
    wav_write(rir_dir / "r0.wav", Waveform(rir, SR), fmt="float32")
    out = tmp_path / "deg.wav"
    log = tmp_path / "deg.log"
    args = ["distort", "--in", str(speech_file), "--noise-dir", str(noise_dir),
            "--rir-dir", str(rir_dir), "--seed", "123", "--out", str(out),
            "--log", str(log)]
    assert main(args) == 0
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first  # seed reproducibility, byte level
    for line in log.read_text().splitlines():
        family, kind = line.split()[:2]
        assert family in ("noise", "reverberation", "microphone", "adc", "agc",
                          "transmission", "headroom")


def test_distort_without_pools_disables_those_families(tmp_path, speech_file, capsys):
    out = tmp_path / "deg.wav"
    code = main(["distort", "--in", str(speech_file), "--seed", "5",
                 "--out", str(out)])
    assert code == 0
    assert "disabling" in capsys.readouterr().err


def test_metrics_command(tmp_path, speech_file, capsys):
    est = tmp_path / "est.wav"
    clean = wav_read(speech_file)
    rng = np.random.default_rng(3)
    wav_write(est, Waveform(clean.samples + 0.005 * rng.standard_normal(SR), SR),
              fmt="float32")
    out_csv = tmp_path / "m.csv"
    code = main(["metrics", "--ref", str(speech_file), "--est", str(est),
                 "--out", str(out_csv), "--id", "utt1"])
    assert code == 0
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "file_id,lsd,ssim,snr_db,si_snr_db"
    assert lines[1].startswith("utt1,")


def test_sr_filter_limits_bandwidth(tmp_path):
    tt = np.arange(SR) / SR
    mix = 0.3 * np.sin(2 * math.pi * 1000.0 * tt) + 0.3 * np.sin(2 * math.pi * 6000.0 * tt)
    src = tmp_path / "wide.wav"
    wav_write(src, Waveform(mix, SR), fmt="float32")
    out = tmp_path / "narrow.wav"
    assert main(["sr-filter", "--in", str(src), "--out", str(out),
                 "--cutoff", "4000", "--order", "12"]) == 0
    filtered = wav_read(out).samples
    spec = np.abs(np.fft.rfft(filtered[SR // 4:]))
    freqs = np.fft.rfftfreq(len(filtered[SR // 4:]), 1.0 / SR)
    high = float(np.max(spec[freqs > 5500.0]))
    low = float(np.max(spec[(freqs > 900.0) & (freqs < 1100.0)]))
    assert 20.0 * math.log10(high / low) < -60.0


def test_wav_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"not a wav at all")
    assert main(["metrics", "--ref", str(bad), "--est", str(bad)]) == 2
    assert "validation error" in capsys.readouterr().err


def test_runtime_errors_exit_3(tmp_path, capsys):
    missing = tmp_path / "missing.wav"
    assert main(["metrics", "--ref", str(missing), "--est", str(missing)]) == 3
