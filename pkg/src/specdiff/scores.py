"""Score functions, denoising losses, and a small trainable score model.

The full-scale network is out of scope here; what this module provides
instead is every score source the sampler and pipeline need:

  * oracle_score        -- exact conditional score, clean state known
  * analytic_gaussian_score -- exact marginal score for Gaussian data
  * ToyScoreNet         -- a fully connected net with hand-written
                           gradients, trainable by SGD on the denoising
                           objective at toy scale
  * predictive_*        -- stand-ins for the complex-spectrum branch

Scores are callables (x_t, y, t) -> array of the same shape; predictive
estimators map a complex spectrogram to (real, imag) estimates.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .sde import (
    SdeParams,
    conditional_score,
    kernel_mean_coeffs,
    kernel_std,
    kernel_variance,
    sample_perturbed,
)

ScoreFunction = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
PredictiveEstimator = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]

_T_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Balance between magnitude and complex spectrum losses."""

    lam: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError(f"loss weight must lie in [0, 1], got {self.lam}")


def oracle_score(params: SdeParams, x0) -> ScoreFunction:
    """Exact conditional score for a known clean state (test oracle)."""
    x0 = np.asarray(x0, dtype=float)

    def score(x_t: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
        return conditional_score(params, x_t, x0, y, t)

    return score


def analytic_gaussian_score(params: SdeParams, m0: float, s0: float) -> ScoreFunction:
    """Exact marginal score when the clean state is N(m0, s0^2) per element.

    The kernel is Gaussian in x0, so the marginal of x_t stays Gaussian:
    mean a*m0 + b*y and variance a^2 s0^2 + sigma(t)^2, with (a, b) the
    kernel mean coefficients. Gives an end-to-end reference without
    access to individual clean samples.
    """
    if not (s0 > 0.0):
        raise ValueError(f"s0 must be positive, got {s0}")

    def score(x_t: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=float)
        y = np.asarray(y, dtype=float)
        a, b = kernel_mean_coeffs(params, t)
        var = a * a * s0 * s0 + kernel_variance(params, t)
        return -(x_t - (a * m0 + b * y)) / var

    return score


def dsm_loss(params: SdeParams, score: ScoreFunction, batch: Sequence[tuple],
             rng: np.random.Generator, t_min: float = 0.0) -> float:
    """Denoising score matching objective over a batch of (x0, y) pairs.

    For each pair, draws t ~ U(t_min, T) and a perturbed state, then
    averages ||score(x_t, y, t) + z/sigma(t)||^2 over the batch. t_min=0
    is the literal objective; note its expectation diverges there
    (sigma^2 ~ c*t near 0), so Monte-Carlo comparisons and training use
    a small positive floor.
    """
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if not (0.0 <= t_min < params.horizon_t):
        raise ValueError(f"t_min must lie in [0, horizon), got {t_min}")
    total = 0.0
    for x0, y in batch:
        t = rng.uniform(t_min, params.horizon_t)
        while t <= _T_FLOOR:
            t = rng.uniform(t_min, params.horizon_t)
        x_t, z = sample_perturbed(params, x0, y, t, rng)
        sigma = kernel_std(params, t)
        residual = np.asarray(score(x_t, np.asarray(y, dtype=float), t)) + z / sigma
        total += float(np.sum(residual * residual))
    return total / len(batch)


def predictive_losses(pred_r, pred_i, clean_r, clean_i,
                      weights: LossWeights = LossWeights()) -> tuple[float, float, float]:
    """Magnitude and complex-spectrum MSEs plus their weighted sum.

    Penalizing real/imag parts alone lets sign errors hide behind the
    magnitude; the magnitude term exposes them, so both are combined as
    lam*l_mag + (1-lam)*l_comp. The score term of the full objective is
    added by the trainer, not here.
    """
    arrays = [np.asarray(a, dtype=float) for a in (pred_r, pred_i, clean_r, clean_i)]
    pred_r, pred_i, clean_r, clean_i = arrays
    if not (pred_r.shape == pred_i.shape == clean_r.shape == clean_i.shape):
        raise ValueError("predictive loss inputs must share one shape")
    mag_err = np.hypot(pred_r, pred_i) - np.hypot(clean_r, clean_i)
    l_mag = float(np.mean(mag_err * mag_err))
    dr = pred_r - clean_r
    di = pred_i - clean_i
    l_comp = float(np.mean(dr * dr + di * di))
    combined = weights.lam * l_mag + (1.0 - weights.lam) * l_comp
    return l_mag, l_comp, combined


# --------------------------------------------------------------------------
# Toy score network: [x_t, y, fourier time features] -> tanh(64) -> tanh(64)
# -> linear. Gradients are written out by hand so the trainer has no
# framework dependency and can be checked against finite differences.
# --------------------------------------------------------------------------

_MODEL_MAGIC = b"SDTN"
_MODEL_VERSION = 1

_PARAM_KEYS = ("w1", "b1", "w2", "b2", "w3", "b3")


def time_features(t, n_features: int) -> np.ndarray:
    """Fourier embedding of diffusion time: sin/cos at geometric frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n_freqs = n_features // 2
    freqs = np.geomspace(1.0, 64.0, n_freqs)
    phase = 2.0 * math.pi * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


class ToyScoreNet:
    """Two-hidden-layer tanh network with an EMA shadow of its weights."""

    def __init__(self, state_dim: int = 1, hidden: int = 64, n_time_features: int = 16,
                 ema_factor: float = 0.999, rng: np.random.Generator | None = None):
        if n_time_features % 2 != 0 or n_time_features < 2:
            raise ValueError("n_time_features must be a positive even number")
        if not (0.0 < ema_factor < 1.0):
            raise ValueError(f"ema_factor must lie in (0, 1), got {ema_factor}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.state_dim = state_dim
        self.hidden = hidden
        self.n_time_features = n_time_features
        self.ema_factor = ema_factor
        in_dim = 2 * state_dim + n_time_features
        self.params = {
            "w1": rng.standard_normal((hidden, in_dim)) / math.sqrt(in_dim),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal((hidden, hidden)) / math.sqrt(hidden),
            "b2": np.zeros(hidden),
            "w3": rng.standard_normal((state_dim, hidden)) / math.sqrt(hidden),
            "b3": np.zeros(state_dim),
        }
        self.ema = {k: v.copy() for k, v in self.params.items()}

    @property
    def in_dim(self) -> int:
        return 2 * self.state_dim + self.n_time_features

    def _inputs(self, x_t: np.ndarray, y: np.ndarray, t: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [x_t, y, time_features(t, self.n_time_features)], axis=1
        )

    def forward(self, x_t: np.ndarray, y: np.ndarray, t, use_ema: bool = False) -> np.ndarray:
        """Score estimates for a batch: x_t, y of shape (B, d), t of shape (B,)."""
        out, _ = self._forward_cached(
            self._inputs(np.asarray(x_t, float), np.asarray(y, float),
                         np.asarray(t, float)),
            self.ema if use_ema else self.params,
        )
        return out

    @staticmethod
    def _forward_cached(inp: np.ndarray, p: dict) -> tuple[np.ndarray, tuple]:
        h1 = np.tanh(inp @ p["w1"].T + p["b1"])
        h2 = np.tanh(h1 @ p["w2"].T + p["b2"])
        out = h2 @ p["w3"].T + p["b3"]
        return out, (inp, h1, h2)

    def score_fn(self, use_ema: bool = True) -> ScoreFunction:
        """Adapt the net to the sampler's score interface.

        Arrays of any shape are flattened to a batch of independent
        scalar states sharing the time argument (state_dim must be 1).
        """
        if self.state_dim != 1:
            raise ValueError("score_fn requires a scalar-state network")

        def score(x_t: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
            x_t = np.asarray(x_t, dtype=float)
            y = np.asarray(y, dtype=float)
            flat_x = x_t.reshape(-1, 1)
            flat_y = np.broadcast_to(y, x_t.shape).reshape(-1, 1)
            ts = np.full(flat_x.shape[0], float(t))
            out = self.forward(flat_x, flat_y, ts, use_ema=use_ema)
            return out.reshape(x_t.shape)

        return score

    # -- denoising loss and gradients -------------------------------------

    def draw_batch(self, params: SdeParams, x0s: np.ndarray, ys: np.ndarray,
                   rng: np.random.Generator, t_min: float = 0.0) -> dict:
        """Sample (t, z, x_t) for a batch; kept separate so the loss is a
        deterministic function of the weights given a draw (finite
        differences need that)."""
        x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        n = x0s.shape[0]
        ts = np.empty(n)
        sigmas = np.empty(n)
        zs = np.empty_like(x0s)
        xts = np.empty_like(x0s)
        for i in range(n):
            t = rng.uniform(t_min, params.horizon_t)
            while t <= _T_FLOOR:
                t = rng.uniform(t_min, params.horizon_t)
            x_t, z = sample_perturbed(params, x0s[i], ys[i], t, rng)
            ts[i] = t
            sigmas[i] = kernel_std(params, t)
            zs[i] = z
            xts[i] = x_t
        return {"x_t": xts, "y": ys, "t": ts, "z": zs, "sigma": sigmas}

    def dsm_value(self, draw: dict, use_ema: bool = False) -> float:
        p = self.ema if use_ema else self.params
        out, _ = self._forward_cached(self._inputs(draw["x_t"], draw["y"], draw["t"]), p)
        residual = out + draw["z"] / draw["sigma"][:, None]
        return float(np.mean(np.sum(residual * residual, axis=1)))

    def dsm_grads(self, draw: dict) -> tuple[float, dict]:
        """Loss and its gradient with respect to every live parameter."""
        p = self.params
        inp = self._inputs(draw["x_t"], draw["y"], draw["t"])
        out, (inp, h1, h2) = self._forward_cached(inp, p)
        residual = out + draw["z"] / draw["sigma"][:, None]
        loss = float(np.mean(np.sum(residual * residual, axis=1)))
        n = inp.shape[0]
        g_out = 2.0 * residual / n
        grads = {
            "w3": g_out.T @ h2,
            "b3": g_out.sum(axis=0),
        }
        g_h2 = (g_out @ p["w3"]) * (1.0 - h2 * h2)
        grads["w2"] = g_h2.T @ h1
        grads["b2"] = g_h2.sum(axis=0)
        g_h1 = (g_h2 @ p["w2"]) * (1.0 - h1 * h1)
        grads["w1"] = g_h1.T @ inp
        grads["b1"] = g_h1.sum(axis=0)
        return loss, grads

    def sgd_step(self, grads: dict, lr: float) -> None:
        for key in _PARAM_KEYS:
            self.params[key] -= lr * grads[key]
            self.ema[key] = self.ema_factor * self.ema[key] + (1.0 - self.ema_factor) * self.params[key]

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        """Flat binary: magic, version, dimensions, ema factor, then live
        and EMA weight arrays row-major in a fixed order."""
        header = struct.pack(
            "<4sIIIId", _MODEL_MAGIC, _MODEL_VERSION,
            self.state_dim, self.hidden, self.n_time_features, self.ema_factor,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            for bank in (self.params, self.ema):
                for key in _PARAM_KEYS:
                    fh.write(np.ascontiguousarray(bank[key], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ToyScoreNet":
        with open(path, "rb") as fh:
            header = fh.read(struct.calcsize("<4sIIIId"))
            if len(header) < struct.calcsize("<4sIIIId"):
                raise ValueError(f"{path}: truncated model header")
            magic, version, state_dim, hidden, n_feats, ema_factor = struct.unpack(
                "<4sIIIId", header
            )
            if magic != _MODEL_MAGIC:
                raise ValueError(f"{path}: not a score model file (bad magic {magic!r})")
            if version != _MODEL_VERSION:
                raise ValueError(f"{path}: unsupported model version {version}")
            net = cls(state_dim=state_dim, hidden=hidden, n_time_features=n_feats,
                      ema_factor=ema_factor)
            for bank in (net.params, net.ema):
                for key in _PARAM_KEYS:
                    shape = bank[key].shape
                    raw = fh.read(8 * int(np.prod(shape)))
                    if len(raw) < 8 * int(np.prod(shape)):
                        raise ValueError(f"{path}: truncated weight array {key!r}")
                    bank[key] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        return net


def train_toy(net: ToyScoreNet, params: SdeParams, dataset: Sequence[tuple],
              epochs: int, lr: float, rng: np.random.Generator,
              batch_size: int = 32, t_min: float = 0.03) -> tuple[ToyScoreNet, list[float]]:
    """Plain SGD on the denoising objective; returns (net, loss history).

    The time floor keeps 1/sigma(t) targets bounded during training (the
    objective's expectation diverges at t -> 0). The EMA shadow is
    updated every step and is what inference should use.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    x0s = np.atleast_2d(np.asarray([p[0] for p in dataset], dtype=float))
    ys = np.atleast_2d(np.asarray([p[1] for p in dataset], dtype=float))
    if x0s.shape[1] > 16:
        raise ValueError("toy trainer is for low-dimensional data (dim <= 16)")
    n = x0s.shape[0]
    history: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            draw = net.draw_batch(params, x0s[idx], ys[idx], rng, t_min=t_min)
            loss, grads = net.dsm_grads(draw)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss {loss} at epoch {epoch}, batch offset {lo}"
                )
            net.sgd_step(grads, lr)
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
    return net, history


def make_toy_gaussian_dataset(n: int, rng: np.random.Generator, m0: float = 1.0,
                              s0: float = 0.5, offset: float = -0.5,
                              noise_scale: float = 4.0) -> tuple[list[tuple], dict]:
    """Scalar Gaussian training task with a closed-form reference score.

    x0 ~ N(m0, s0^2) and y = x0 + offset + eps with eps ~ N(0,
    (noise_scale*s0)^2). The conditioning noise is sized several times
    s0 so the posterior over x0 given y stays close to the prior and
    analytic_gaussian_score(m0, s0) is an accurate reference for the
    trained score (exact in the noise_scale -> inf limit). Returns the
    (x0, y) pairs and the task constants, including the central
    conditioning value y_eval = m0 + offset used for evaluation grids.
    """
    x0 = m0 + s0 * rng.standard_normal(n)
    y = x0 + offset + noise_scale * s0 * rng.standard_normal(n)
    dataset = [(np.array([a]), np.array([b])) for a, b in zip(x0, y)]
    meta = {"m0": m0, "s0": s0, "offset": offset, "noise_scale": noise_scale,
            "y_eval": m0 + offset}
    return dataset, meta


# -- predictive stand-ins ----------------------------------------------------


def predictive_identity() -> PredictiveEstimator:
    """Returns the degraded spectrum unchanged."""

    def estimate(spec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        spec = np.asarray(spec)
        return spec.real.copy(), spec.imag.copy()

    return estimate


def predictive_oracle(clean_spec: np.ndarray) -> PredictiveEstimator:
    """Returns the clean spectrum regardless of input."""
    clean_spec = np.asarray(clean_spec)
    real = clean_spec.real.copy()
    imag = clean_spec.imag.copy()

    def estimate(spec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return real.copy(), imag.copy()

    return estimate


def predictive_spectral_subtraction(noise_floor: float = 1.0) -> PredictiveEstimator:
    """Subtract a stationary noise-floor estimate from the magnitude.

    The floor is the per-bin 10th-percentile magnitude across frames,
    scaled by noise_floor; magnitudes floor at 0 and phase is kept.
    """
    if noise_floor < 0.0:
        raise ValueError(f"noise_floor must be non-negative, got {noise_floor}")

    def estimate(spec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        spec = np.asarray(spec)
        mag = np.abs(spec)
        floor = np.percentile(mag, 10.0, axis=0, keepdims=True)
        out = np.maximum(mag - noise_floor * floor, 0.0)
        phase = np.angle(spec)
        return out * np.cos(phase), out * np.sin(phase)

    return estimate
