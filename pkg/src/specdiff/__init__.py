"""Score-based diffusion machinery for spectral speech enhancement.

Closed-form diffusion kernels (mean-reverting and bridge variants),
Euler-Maruyama forward/reverse solvers with truncated initialization,
denoising-score-matching training at toy scale, a compressed-magnitude
STFT pipeline with predictive/generative output fusion, a probabilistic
distortion chain for corpus generation, and spectral metrics.
"""

from .config import ConfigError, RunConfig, derive_rng
from .distort import DistortionChain, DistortionStage, sample_chain
from .expint import expint_ei
from .metrics import MetricReport, lsd, si_snr_db, snr_db, spectrogram_ssim
from .sampling import (
    ReverseSchedule,
    TrajectoryStats,
    forward_simulate,
    reverse_solve,
    reverse_step,
    truncated_init,
)
from .scores import (
    LossWeights,
    ToyScoreNet,
    analytic_gaussian_score,
    dsm_loss,
    oracle_score,
    predictive_identity,
    predictive_losses,
    predictive_oracle,
    predictive_spectral_subtraction,
    train_toy,
)
from .sde import (
    KernelMoments,
    SdeParams,
    conditional_score,
    diffusion_coeff,
    drift,
    kernel_mean,
    kernel_moments,
    kernel_std,
    kernel_variance,
    sample_perturbed,
)
from .spectral import (
    FusionConfig,
    StftConfig,
    TransformConfig,
    Waveform,
    amplitude_transform,
    enhance,
    inverse_amplitude_transform,
    istft,
    output_fusion,
    stft,
)
from .wavio import WavFormatError, wav_read, wav_write

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "RunConfig", "derive_rng",
    "DistortionChain", "DistortionStage", "sample_chain",
    "expint_ei",
    "MetricReport", "lsd", "si_snr_db", "snr_db", "spectrogram_ssim",
    "ReverseSchedule", "TrajectoryStats", "forward_simulate",
    "reverse_solve", "reverse_step", "truncated_init",
    "LossWeights", "ToyScoreNet", "analytic_gaussian_score", "dsm_loss",
    "oracle_score", "predictive_identity", "predictive_losses",
    "predictive_oracle", "predictive_spectral_subtraction", "train_toy",
    "KernelMoments", "SdeParams", "conditional_score", "diffusion_coeff",
    "drift", "kernel_mean", "kernel_moments", "kernel_std",
    "kernel_variance", "sample_perturbed",
    "FusionConfig", "StftConfig", "TransformConfig", "Waveform",
    "amplitude_transform", "enhance", "inverse_amplitude_transform",
    "istft", "output_fusion", "stft",
    "WavFormatError", "wav_read", "wav_write",
]
