"""STFT analysis/synthesis, magnitude compression, fusion, and the full
enhancement pipeline.

Spectrograms are plain complex arrays of shape (frames, bins) with
bins = window_length // 2 + 1. Analysis is centered with reflective
padding and synthesis divides by the squared-window overlap sum, which
makes the round trip exact (to rounding) without any overlap constraint
on the hop size.

The diffusion in `enhance` operates on the compressed magnitude: the
amplitude transform is applied right after analysis, and everything up
to the inverse transform stays in that compressed domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import ReverseSchedule, ScoreFunction, reverse_solve, truncated_init
from .scores import PredictiveEstimator
from .sde import SdeParams

_WINDOW_SUM_MIN = 1e-8


@dataclass(frozen=True)
class StftConfig:
    """Hann-window analysis parameters (defaults: 32 ms window, 12 ms hop at 16 kHz)."""

    window_length: int = 512
    hop: int = 192

    def __post_init__(self) -> None:
        if self.window_length < 2:
            raise ValueError(f"window_length must be >= 2, got {self.window_length}")
        if not (0 < self.hop <= self.window_length):
            raise ValueError(f"hop must lie in (0, window_length], got {self.hop}")

    @property
    def n_bins(self) -> int:
        return self.window_length // 2 + 1


@dataclass(frozen=True)
class TransformConfig:
    """Magnitude compression beta1*|.|^beta2 with phase preserved."""

    beta1: float = 0.3
    beta2: float = 0.3

    def __post_init__(self) -> None:
        if not (self.beta1 > 0.0):
            raise ValueError(f"beta1 must be positive, got {self.beta1}")
        if not (0.0 < self.beta2 <= 1.0):
            raise ValueError(f"beta2 must lie in (0, 1], got {self.beta2}")


@dataclass(frozen=True)
class FusionConfig:
    """Weight of the predictive magnitude in the output fusion."""

    alpha: float = 0.4

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class Waveform:
    """Mono audio samples (nominally in [-1, 1]) at a given rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)


def _hann(n: int) -> np.ndarray:
    # periodic Hann, the standard analysis choice
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(n) / n)


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """One-sided STFT with centered, reflect-padded framing."""
    x = w.samples
    if x.size == 0:
        raise ValueError("cannot transform an empty signal")
    win = cfg.window_length
    pad = win // 2
    if x.size < pad + 1:
        raise ValueError(f"signal too short for centered analysis: need > {pad} samples")
    xp = np.pad(x, pad, mode="reflect")
    n_frames = max(1, math.ceil((xp.size - win) / cfg.hop) + 1)
    total = (n_frames - 1) * cfg.hop + win
    if total > xp.size:
        xp = np.pad(xp, (0, total - xp.size))
    offsets = np.arange(n_frames) * cfg.hop
    frames = np.lib.stride_tricks.sliding_window_view(xp, win)[offsets]
    return np.fft.rfft(frames * _hann(win), axis=1)


def istft(spec: np.ndarray, cfg: StftConfig, length: int,
          sample_rate: int = 16000) -> Waveform:
    """Overlap-add inverse with squared-window-sum normalization."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ValueError(
            f"expected spectrogram of shape (frames, {cfg.n_bins}), got {spec.shape}"
        )
    if length < 0:
        raise ValueError("length must be non-negative")
    win = cfg.window_length
    pad = win // 2
    window = _hann(win)
    frames = np.fft.irfft(spec, n=win, axis=1) * window
    total = (spec.shape[0] - 1) * cfg.hop + win
    y = np.zeros(total)
    wsum = np.zeros(total)
    wsq = window * window
    for i in range(spec.shape[0]):
        o = i * cfg.hop
        y[o:o + win] += frames[i]
        wsum[o:o + win] += wsq
    lo, hi = pad, pad + length
    if hi > total:
        raise ValueError(f"requested length {length} exceeds synthesized span {total - pad}")
    norm = wsum[lo:hi]
    if np.any(norm < _WINDOW_SUM_MIN):
        raise ValueError("degenerate window overlap: squared-window sum below 1e-8")
    return Waveform(y[lo:hi] / norm, sample_rate=sample_rate)


def amplitude_transform(spec: np.ndarray, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    """Compress magnitudes to beta1*|.|^beta2, leaving phase untouched."""
    spec = np.asarray(spec)
    mag = np.abs(spec)
    return cfg.beta1 * mag ** cfg.beta2 * np.exp(1j * np.angle(spec))


def inverse_amplitude_transform(spec: np.ndarray,
                                cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    """Undo the magnitude compression of a complex spectrogram."""
    spec = np.asarray(spec)
    return magnitude_expand(np.abs(spec), cfg) * np.exp(1j * np.angle(spec))


def magnitude_expand(mag: np.ndarray, cfg: TransformConfig = TransformConfig()) -> np.ndarray:
    """Inverse transform on a bare magnitude array: (m/beta1)^(1/beta2)."""
    mag = np.asarray(mag, dtype=float)
    if np.any(mag < 0.0):
        raise ValueError("magnitude array has negative entries; cannot invert the transform")
    return (mag / cfg.beta1) ** (1.0 / cfg.beta2)


def output_fusion(pred_r, pred_i, gen_mag, cfg: FusionConfig = FusionConfig()
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Blend predictive and generative magnitudes; phase from the predictive pair.

    Returns (magnitude, phase) with magnitude = alpha*|pred| +
    (1-alpha)*gen_mag and phase = arctan2(pred_i, pred_r); an all-zero
    predictive bin gets phase 0.
    """
    pred_r = np.asarray(pred_r, dtype=float)
    pred_i = np.asarray(pred_i, dtype=float)
    gen_mag = np.asarray(gen_mag, dtype=float)
    if not (pred_r.shape == pred_i.shape == gen_mag.shape):
        raise ValueError("fusion inputs must share one shape")
    if np.any(gen_mag < 0.0):
        raise ValueError("generative magnitudes must be non-negative (clip before fusing)")
    mag = cfg.alpha * np.hypot(pred_r, pred_i) + (1.0 - cfg.alpha) * gen_mag
    return mag, np.arctan2(pred_i, pred_r)


class PipelineError(RuntimeError):
    """Enhancement failure, tagged with the stage that raised."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"enhance stage '{stage}': {original}")
        self.stage = stage


def enhance(degraded: Waveform, pred: PredictiveEstimator, score: ScoreFunction,
            params: SdeParams, schedule: ReverseSchedule,
            fusion: FusionConfig = FusionConfig(),
            stft_cfg: StftConfig = StftConfig(),
            transform_cfg: TransformConfig = TransformConfig(),
            rng: np.random.Generator | None = None) -> Waveform:
    """Full enhancement of one utterance.

    analysis -> magnitude compression -> predictive estimate ->
    predictive-mean reverse initialization -> reverse diffusion on the
    compressed magnitude -> clip negatives -> fuse with the predictive
    magnitude -> predictive phase -> decompression -> synthesis, trimmed
    to the input length.
    """
    if rng is None:
        rng = np.random.default_rng(0)

    def run(stage: str, fn, *args):
        try:
            return fn(*args)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(stage, exc) from exc

    spec_raw = run("stft", stft, degraded, stft_cfg)
    spec_c = run("amplitude-transform", amplitude_transform, spec_raw, transform_cfg)

    def predictive(s):
        pr, pi = pred(s)
        pr = np.asarray(pr, dtype=float)
        pi = np.asarray(pi, dtype=float)
        if pr.shape != s.shape or pi.shape != s.shape:
            raise ValueError("predictive estimate shape does not match the spectrogram")
        return pr, pi

    pred_r, pred_i = run("predictive", predictive, spec_c)
    pred_mag = np.hypot(pred_r, pred_i)
    degraded_mag = np.abs(spec_c)
    x_init = run("truncated-init", truncated_init, params, pred_mag, degraded_mag,
                 schedule.start, rng)
    gen = run("reverse-solve", reverse_solve, params, score, x_init, degraded_mag,
              schedule, rng)
    gen_mag = np.maximum(gen, 0.0)
    mag, phase = run("fusion", output_fusion, pred_r, pred_i, gen_mag, fusion)
    raw_mag = run("inverse-transform", magnitude_expand, mag, transform_cfg)
    spec_out = raw_mag * np.cos(phase) + 1j * raw_mag * np.sin(phase)
    return run("istft", istft, spec_out, stft_cfg, len(degraded.samples),
               degraded.sample_rate)
