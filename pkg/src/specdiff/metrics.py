"""Intrusive spectral and waveform metrics: log-spectral distance,
spectrogram structural similarity, and (scale-invariant) SNR.

All metrics are deterministic pure functions. LSD operates on raw
(uncompressed) magnitude spectra with natural logarithms, flooring the
squared magnitudes at a configurable epsilon because the log ratio is
undefined on empty bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .spectral import Waveform

SNR_CAP_DB = 300.0
LSD_DEFAULT_FLOOR = 1e-8
_SSIM_WINDOW = 7


@dataclass(frozen=True)
class MetricReport:
    """One row of metric results for a (reference, estimate) pair."""

    lsd: float
    ssim: float
    snr_db: float
    si_snr_db: float
    lsd_floor: float = LSD_DEFAULT_FLOOR

    def __post_init__(self) -> None:
        if self.lsd < 0.0:
            raise ValueError("LSD is non-negative by construction")
        if self.ssim > 1.0 + 1e-9:
            raise ValueError("SSIM cannot exceed 1")

    @staticmethod
    def csv_header() -> str:
        return "file_id,lsd,ssim,snr_db,si_snr_db"

    def csv_row(self, file_id: str) -> str:
        return f"{file_id},{self.lsd!r},{self.ssim!r},{self.snr_db!r},{self.si_snr_db!r}"

    def write_csv(self, fh: TextIO, file_id: str) -> None:
        fh.write(self.csv_header() + "\n")
        fh.write(self.csv_row(file_id) + "\n")


def lsd(reference: np.ndarray, estimate: np.ndarray,
        floor: float = LSD_DEFAULT_FLOOR) -> float:
    """Log-spectral distance between two complex (or magnitude) spectrograms.

    Per frame, the RMS over bins of ln(|X|^2/|X_hat|^2); averaged over
    frames. Symmetric under swapping the arguments.
    """
    if floor <= 0.0:
        raise ValueError(f"floor must be positive, got {floor}")
    ref = np.asarray(reference)
    est = np.asarray(estimate)
    if ref.shape != est.shape:
        raise ValueError(f"spectrogram shape mismatch: {ref.shape} vs {est.shape}")
    p = np.maximum(np.abs(ref) ** 2, floor)
    q = np.maximum(np.abs(est) ** 2, floor)
    log_ratio = np.log(p / q)
    return float(np.mean(np.sqrt(np.mean(log_ratio * log_ratio, axis=1))))


def _window_means(a: np.ndarray, win: int) -> np.ndarray:
    # valid-mode local means via an integral image
    s = np.cumsum(np.cumsum(a, axis=0), axis=1)
    s = np.pad(s, ((1, 0), (1, 0)))
    out = (s[win:, win:] - s[:-win, win:] - s[win:, :-win] + s[:-win, :-win])
    return out / (win * win)


def spectrogram_ssim(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Mean local structural similarity over magnitude spectrograms.

    Uniform 7x7 windows (valid positions only), stability constants
    C1=(0.01 R)^2 and C2=(0.03 R)^2 with R the reference dynamic range
    (R falls back to 1 for a constant reference). Inputs smaller than
    the window are compared as a single global window.
    """
    ref = np.asarray(reference, dtype=float)
    est = np.asarray(estimate, dtype=float)
    if ref.shape != est.shape:
        raise ValueError(f"magnitude shape mismatch: {ref.shape} vs {est.shape}")
    if ref.ndim != 2:
        raise ValueError("spectrogram SSIM expects 2-D magnitude arrays")
    if np.any(ref < 0.0) or np.any(est < 0.0):
        raise ValueError("magnitude arrays must be non-negative")
    r_range = float(ref.max() - ref.min()) if ref.size else 0.0
    if r_range == 0.0:
        r_range = 1.0
    c1 = (0.01 * r_range) ** 2
    c2 = (0.03 * r_range) ** 2
    win = min(_SSIM_WINDOW, ref.shape[0], ref.shape[1])
    mu_x = _window_means(ref, win)
    mu_y = _window_means(est, win)
    exx = _window_means(ref * ref, win)
    eyy = _window_means(est * est, win)
    exy = _window_means(ref * est, win)
    var_x = np.maximum(exx - mu_x * mu_x, 0.0)
    var_y = np.maximum(eyy - mu_y * mu_y, 0.0)
    cov = exy - mu_x * mu_y
    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(np.mean(ssim_map))


def snr_db(reference: Waveform, estimate: Waveform) -> float:
    """Energy-ratio SNR in dB, capped at 300 (the identical-signal sentinel)."""
    ref = reference.samples
    est = estimate.samples
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    p_ref = float(np.sum(ref * ref))
    if p_ref == 0.0:
        raise ValueError("reference has zero energy; SNR is undefined")
    err = est - ref
    p_err = float(np.sum(err * err))
    if p_err == 0.0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * math.log10(p_ref / p_err))


def si_snr_db(reference: Waveform, estimate: Waveform) -> float:
    """Scale-invariant SNR: project the estimate onto the reference first."""
    ref = reference.samples
    est = estimate.samples
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    p_ref = float(np.dot(ref, ref))
    if p_ref == 0.0:
        raise ValueError("reference has zero energy; SI-SNR is undefined")
    target = (float(np.dot(est, ref)) / p_ref) * ref
    err = est - target
    p_t = float(np.dot(target, target))
    p_e = float(np.dot(err, err))
    if p_e == 0.0:
        return SNR_CAP_DB
    if p_t == 0.0:
        return -SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * math.log10(p_t / p_e))


def report(reference_wav: Waveform, estimate_wav: Waveform,
           reference_spec: np.ndarray, estimate_spec: np.ndarray,
           lsd_floor: float = LSD_DEFAULT_FLOOR) -> MetricReport:
    return MetricReport(
        lsd=lsd(reference_spec, estimate_spec, floor=lsd_floor),
        ssim=spectrogram_ssim(np.abs(reference_spec), np.abs(estimate_spec)),
        snr_db=snr_db(reference_wav, estimate_wav),
        si_snr_db=si_snr_db(reference_wav, estimate_wav),
        lsd_floor=lsd_floor,
    )
