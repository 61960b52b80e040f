"""Closed-form machinery of the two forward diffusion processes.

Both processes move a clean state toward a degraded reference while
injecting exponentially scheduled Gaussian noise g(t) = sqrt(c) k^t:

  * "ouve" -- mean-reverting drift gamma*(y - x). The mean decays toward
    y exponentially, so at any finite horizon a mismatch e^(-gamma*T)
    of the initial gap remains.
  * "bbed" -- bridge drift (y - x)/(1 - t). The mean interpolates
    linearly between the endpoints and pins the state near y as t -> T,
    at the price of requiring T < 1.

The state distribution at time t given both endpoints is Gaussian with
moments in closed form (kernel_mean / kernel_std below), which makes an
exact conditional score available for testing and for oracle-driven
sampling. Everything here is shape-agnostic: states are plain real
arrays and the kernel acts elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expint import expint_ei

_TIME_RTOL = 1e-9
_VAR_CLAMP = 1e-12

VARIANTS = ("ouve", "bbed")


@dataclass(frozen=True)
class SdeParams:
    """Parameter set selecting a diffusion variant.

    c and k schedule the noise (k > 1); gamma is the mean-reversion
    stiffness and is ignored by the bridge variant; horizon_t is the
    total diffusion time (the bridge requires horizon_t < 1).
    """

    variant: str
    c: float
    k: float
    gamma: float = 1.5
    horizon_t: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown SDE variant {self.variant!r}, expected one of {VARIANTS}")
        if not (self.c > 0.0):
            raise ValueError(f"noise scale c must be strictly positive, got {self.c}")
        if not (self.k > 1.0):
            raise ValueError(f"noise base k must satisfy k > 1, got {self.k}")
        if not (self.gamma > 0.0):
            raise ValueError(f"stiffness gamma must be strictly positive, got {self.gamma}")
        if not (0.0 < self.horizon_t <= 1.0):
            raise ValueError(f"horizon_t must lie in (0, 1], got {self.horizon_t}")
        if self.variant == "bbed" and self.horizon_t >= 1.0:
            raise ValueError("the bridge variant requires horizon_t < 1 (drift blows up at t = 1)")

    @classmethod
    def ouve(cls, gamma: float = 1.5, c: float = 0.01, k: float = 10.0,
             horizon_t: float = 1.0) -> "SdeParams":
        return cls(variant="ouve", c=c, k=k, gamma=gamma, horizon_t=horizon_t)

    @classmethod
    def bbed(cls, c: float = 0.51, k: float = 2.6, horizon_t: float = 0.999) -> "SdeParams":
        return cls(variant="bbed", c=c, k=k, horizon_t=horizon_t)


@dataclass(frozen=True)
class KernelMoments:
    """Gaussian moments of the state at one diffusion time."""

    mean: np.ndarray
    std: float


def _check_time(params: SdeParams, t: float) -> float:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"diffusion time must be finite, got {t}")
    if t < 0.0 or t > params.horizon_t * (1.0 + _TIME_RTOL):
        raise ValueError(f"diffusion time {t} outside [0, {params.horizon_t}]")
    return min(t, params.horizon_t)


def _as_state_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"state shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def drift(params: SdeParams, x, y, t: float) -> np.ndarray:
    """Drift coefficient f(x, t) of the forward process."""
    x, y = _as_state_pair(x, y)
    t = _check_time(params, t)
    if params.variant == "ouve":
        return params.gamma * (y - x)
    if t >= 1.0:
        raise ValueError("bridge drift is singular at t >= 1")
    return (y - x) / (1.0 - t)


def diffusion_coeff(params: SdeParams, t: float) -> float:
    """Diffusion coefficient g(t) = sqrt(c) k^t, shared by both variants."""
    t = _check_time(params, t)
    return math.sqrt(params.c) * params.k ** t


def kernel_mean_coeffs(params: SdeParams, t: float) -> tuple[float, float]:
    """Coefficients (a, b) with kernel mean = a*x0 + b*y."""
    t = _check_time(params, t)
    if params.variant == "ouve":
        a = math.exp(-params.gamma * t)
        return a, 1.0 - a
    # written as (1-t, t) rather than (a, 1-a): the bridge mean must be
    # exactly linear in t, and 1-(1-t) rounds differently from t
    return 1.0 - t, t


def kernel_mean(params: SdeParams, x0, y, t: float) -> np.ndarray:
    """Mean of the state at time t given the endpoints."""
    x0, y = _as_state_pair(x0, y)
    a, b = kernel_mean_coeffs(params, t)
    return a * x0 + b * y


def kernel_variance(params: SdeParams, t: float) -> float:
    """Variance of the state at time t (scalar; the kernel is diagonal)."""
    t = _check_time(params, t)
    c, k = params.c, params.k
    lk = math.log(k)
    if params.variant == "ouve":
        var = c * (k ** (2.0 * t) - math.exp(-2.0 * params.gamma * t)) / (2.0 * (params.gamma + lk))
    else:
        # log(k^(2 k^2)) evaluated as 2 k^2 log(k) to avoid overflow in k^(2k^2)
        log_k_pow = 2.0 * k * k * lk
        if t == 0.0:
            e_term = 0.0
        else:
            e_term = expint_ei(2.0 * (t - 1.0) * lk) - expint_ei(-2.0 * lk)
        var = (1.0 - t) * c * ((k ** (2.0 * t) - 1.0 + t) + log_k_pow * (1.0 - t) * e_term)
    if var < -_VAR_CLAMP:
        raise ValueError(
            f"negative kernel variance {var} at t={t}: parameter set is inconsistent"
        )
    return max(var, 0.0)


def kernel_std(params: SdeParams, t: float) -> float:
    """Standard deviation of the state at time t; exactly 0 at t = 0."""
    return math.sqrt(kernel_variance(params, t))


def kernel_moments(params: SdeParams, x0, y, t: float) -> KernelMoments:
    return KernelMoments(mean=kernel_mean(params, x0, y, t), std=kernel_std(params, t))


def conditional_score(params: SdeParams, x_t, x0, y, t: float) -> np.ndarray:
    """Gradient of the log Gaussian kernel density at x_t, -(x_t - mean)/var.

    Requires t > 0; at t = 0 the kernel degenerates to a point mass.
    """
    x_t = np.asarray(x_t, dtype=float)
    x0, y = _as_state_pair(x0, y)
    if x_t.shape != x0.shape:
        raise ValueError(f"state shape mismatch: {x_t.shape} vs {x0.shape}")
    var = kernel_variance(params, t)
    if var == 0.0:
        raise ValueError(f"conditional score is singular at t = {t} (zero variance)")
    return -(x_t - kernel_mean(params, x0, y, t)) / var


def sample_perturbed(params: SdeParams, x0, y, t: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw x_t = mean + std*z with z ~ N(0, I); returns (x_t, z).

    The Gaussian draw is returned so callers can form the denoising
    target -z/std without re-deriving it from x_t.
    """
    x0, y = _as_state_pair(x0, y)
    moments = kernel_moments(params, x0, y, t)
    z = rng.standard_normal(size=x0.shape)
    return moments.mean + moments.std * z, z
