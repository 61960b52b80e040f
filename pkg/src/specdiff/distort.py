"""Universal degradation pipeline: parameterized stages and a
probabilistic chain for corpus generation.

Stage families and firing probabilities follow the production pipeline
this mirrors (noise 0.3, reverberation 0.25, microphone EQ 0.5, ADC
low/high-pass 0.7 each, bit depth 0.1, AGC 0.4, transmission clip/gain
0.25 each and resample 0.4). GSM compression is a reserved provenance
kind ("gsm_compression") that this implementation never emits -- codec
simulation is out of scope.

Filter coefficients are designed here (analog Butterworth prototype via
bilinear transform; RBJ-style shelf/peak biquads) and applied as
cascaded second-order sections. The chain trims any stage output whose
peak exceeds full scale back to |x| <= 1 and logs the trim, which keeps
the fixed-point stages (clipping, bit depth) in their nominal domain
and bounds every intermediate signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import resample_poly, sosfilt

from .spectral import Waveform

STAGE_KINDS = (
    "additive_noise", "rir_convolve", "low_shelf", "high_shelf", "peak",
    "lowpass", "highpass", "bit_depth", "clip", "gain", "resample",
)
RESERVED_KINDS = ("gsm_compression",)

_PEAK_LIMIT = 1.0
# well beyond any legitimate transient (gains are capped at +12 dB on
# peak-trimmed input); only genuine filter blowups reach this
_BLOWUP_LIMIT = 16.0


@dataclass(frozen=True)
class DistortionStage:
    """One applied (or applicable) distortion with its parameters."""

    kind: str
    params: Mapping[str, float | int]
    family: str = ""

    def __post_init__(self) -> None:
        if self.kind not in STAGE_KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        p = self.params
        if self.kind == "bit_depth" and not (4 <= int(p["bits"]) <= 16):
            raise ValueError(f"bit depth must lie in [4, 16], got {p['bits']}")
        if self.kind == "clip" and not (0.0 < float(p["threshold"]) <= 1.0):
            raise ValueError(f"clip threshold must lie in (0, 1], got {p['threshold']}")
        if self.kind in ("lowpass", "highpass"):
            order = int(p["order"])
            if order < 2 or order % 2:
                raise ValueError(f"filter order must be even and >= 2, got {order}")

    def describe(self) -> str:
        parts = " ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.family or '-'} {self.kind} {parts}".rstrip()


# -- individual stages -------------------------------------------------------


def add_noise_at_snr(clean: Waveform, noise: Waveform, snr_db: float,
                     rng: np.random.Generator | None = None) -> Waveform:
    """Mix noise into clean at the requested SNR (no renormalization).

    Short noise clips are tiled with a circular offset (random when an
    rng is supplied, 0 otherwise); long ones are truncated. snr_db=inf
    returns the clean signal unchanged.
    """
    x = clean.samples
    n = noise.samples
    p_clean = float(np.mean(x * x))
    if p_clean == 0.0:
        raise ValueError("clean signal has zero power; SNR is undefined")
    if math.isinf(snr_db) and snr_db > 0:
        return Waveform(x.copy(), clean.sample_rate)
    if n.size < x.size:
        reps = math.ceil(x.size / n.size)
        n = np.tile(n, reps)
    if n.size > x.size:
        offset = int(rng.integers(0, n.size - x.size + 1)) if rng is not None else 0
        n = np.roll(n, -offset)[:x.size]
    p_noise = float(np.mean(n * n))
    if p_noise == 0.0:
        raise ValueError("noise signal has zero power")
    scale = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return Waveform(x + scale * n, clean.sample_rate)


def _bilinear_biquad(b_analog: tuple[float, float, float],
                     a_analog: tuple[float, float, float], fs: float) -> np.ndarray:
    # (b2 s^2 + b1 s + b0)/(a2 s^2 + a1 s + a0) under s = K (1-z^-1)/(1+z^-1)
    b2, b1, b0 = b_analog
    a2, a1, a0 = a_analog
    kk = 2.0 * fs
    b = np.array([b2 * kk * kk + b1 * kk + b0,
                  2.0 * (b0 - b2 * kk * kk),
                  b2 * kk * kk - b1 * kk + b0])
    a = np.array([a2 * kk * kk + a1 * kk + a0,
                  2.0 * (a0 - a2 * kk * kk),
                  a2 * kk * kk - a1 * kk + a0])
    return np.concatenate([b, a]) / a[0]


def _check_stable(sos: np.ndarray) -> None:
    for section in np.atleast_2d(sos):
        poles = np.roots(section[3:])
        if np.any(np.abs(poles) >= 1.0):
            raise ValueError("unstable filter section (pole magnitude >= 1)")


def butterworth_sos(order: int, cutoff_hz: float, fs: float, kind: str) -> np.ndarray:
    """Cascaded second-order sections of a Butterworth low/high-pass.

    Conjugate pole pairs of the analog prototype are frequency-scaled to
    the prewarped cutoff and mapped by the bilinear transform.
    """
    if kind not in ("low", "high"):
        raise ValueError(f"kind must be 'low' or 'high', got {kind!r}")
    if order < 2 or order % 2:
        raise ValueError(f"order must be even and >= 2, got {order}")
    if not (0.0 < cutoff_hz < fs / 2.0):
        raise ValueError(f"cutoff {cutoff_hz} Hz outside (0, {fs / 2.0}) Hz")
    warped = 2.0 * fs * math.tan(math.pi * cutoff_hz / fs)
    sections = []
    for m in range(order // 2):
        theta = math.pi * (2 * m + 1) / (2 * order)
        two_a = 2.0 * math.sin(theta)  # -2*Re(pole) for the unit prototype pair
        if kind == "low":
            b_analog = (0.0, 0.0, warped * warped)
        else:
            b_analog = (1.0, 0.0, 0.0)
        a_analog = (1.0, two_a * warped, warped * warped)
        sections.append(_bilinear_biquad(b_analog, a_analog, fs))
    sos = np.vstack(sections)
    _check_stable(sos)
    return sos


def butterworth_filter(w: Waveform, order: int, cutoff_hz: float, kind: str) -> Waveform:
    sos = butterworth_sos(order, cutoff_hz, w.sample_rate, kind)
    return Waveform(sosfilt(sos, w.samples), w.sample_rate)


def _shelf_peak_sos(kind: str, freq_hz: float, gain_db: float, fs: float,
                    q: float = 1.0 / math.sqrt(2.0)) -> np.ndarray:
    # RBJ audio-EQ biquads; shelves use slope 1 (q = 1/sqrt(2)).
    if not (0.0 < freq_hz < fs / 2.0):
        raise ValueError(f"anchor frequency {freq_hz} Hz outside (0, {fs / 2.0}) Hz")
    if q <= 0.0:
        raise ValueError(f"q must be positive, got {q}")
    big_a = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * math.pi * freq_hz / fs
    cw, sw = math.cos(w0), math.sin(w0)
    alpha = sw / (2.0 * q)
    if kind == "peak":
        b = [1.0 + alpha * big_a, -2.0 * cw, 1.0 - alpha * big_a]
        a = [1.0 + alpha / big_a, -2.0 * cw, 1.0 - alpha / big_a]
    elif kind == "low_shelf":
        two_sqrt_a_alpha = 2.0 * math.sqrt(big_a) * alpha
        b = [big_a * ((big_a + 1) - (big_a - 1) * cw + two_sqrt_a_alpha),
             2 * big_a * ((big_a - 1) - (big_a + 1) * cw),
             big_a * ((big_a + 1) - (big_a - 1) * cw - two_sqrt_a_alpha)]
        a = [(big_a + 1) + (big_a - 1) * cw + two_sqrt_a_alpha,
             -2 * ((big_a - 1) + (big_a + 1) * cw),
             (big_a + 1) + (big_a - 1) * cw - two_sqrt_a_alpha]
    elif kind == "high_shelf":
        two_sqrt_a_alpha = 2.0 * math.sqrt(big_a) * alpha
        b = [big_a * ((big_a + 1) + (big_a - 1) * cw + two_sqrt_a_alpha),
             -2 * big_a * ((big_a - 1) + (big_a + 1) * cw),
             big_a * ((big_a + 1) + (big_a - 1) * cw - two_sqrt_a_alpha)]
        a = [(big_a + 1) - (big_a - 1) * cw + two_sqrt_a_alpha,
             2 * ((big_a - 1) - (big_a + 1) * cw),
             (big_a + 1) - (big_a - 1) * cw - two_sqrt_a_alpha]
    else:
        raise ValueError(f"unknown shelf/peak kind {kind!r}")
    sos = (np.array(b + a) / a[0]).reshape(1, 6)
    _check_stable(sos)
    return sos


def shelf_peak_filter(w: Waveform, stage: DistortionStage) -> Waveform:
    """Apply a low-shelf, high-shelf, or peak biquad described by `stage`."""
    if stage.kind not in ("low_shelf", "high_shelf", "peak"):
        raise ValueError(f"not a shelf/peak stage: {stage.kind!r}")
    q = float(stage.params.get("q", 1.0 / math.sqrt(2.0)))
    sos = _shelf_peak_sos(stage.kind, float(stage.params["freq_hz"]),
                          float(stage.params["gain_db"]), w.sample_rate, q=q)
    return Waveform(sosfilt(sos, w.samples), w.sample_rate)


def clip(w: Waveform, threshold: float) -> Waveform:
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"clip threshold must lie in (0, 1], got {threshold}")
    return Waveform(np.clip(w.samples, -threshold, threshold), w.sample_rate)


def apply_gain(w: Waveform, db: float) -> Waveform:
    return Waveform(w.samples * 10.0 ** (db / 20.0), w.sample_rate)


def bit_depth_reduce(w: Waveform, bits: int) -> Waveform:
    """Uniform midtread quantization to 2^bits levels over [-1, 1)."""
    if not (4 <= bits <= 16):
        raise ValueError(f"bit depth must lie in [4, 16], got {bits}")
    scale = float(2 ** (bits - 1))
    q = np.round(np.clip(w.samples, -1.0, 1.0) * scale)
    q = np.clip(q, -scale, scale - 1.0) / scale
    return Waveform(q, w.sample_rate)


def resample_rate(w: Waveform, target_rate: int) -> Waveform:
    """Polyphase conversion to target_rate (length scales with the ratio)."""
    if target_rate <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return Waveform(w.samples.copy(), w.sample_rate)
    g = math.gcd(int(target_rate), int(w.sample_rate))
    up, down = target_rate // g, w.sample_rate // g
    return Waveform(resample_poly(w.samples, up, down), target_rate)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Round trip through target_rate; the bandwidth loss is the distortion."""
    native = w.sample_rate
    down = resample_rate(w, target_rate)
    back = resample_rate(down, native)
    out = back.samples
    if out.size < w.samples.size:
        out = np.pad(out, (0, w.samples.size - out.size))
    return Waveform(out[:w.samples.size], native)


def rir_convolve(clean: Waveform, rir: Waveform) -> Waveform:
    """Full convolution with an impulse response, trimmed to the input
    length and peak-normalized back to the clean peak."""
    if rir.samples.size == 0:
        raise ValueError("empty impulse response")
    out = np.convolve(clean.samples, rir.samples)[:clean.samples.size]
    peak = float(np.max(np.abs(out)))
    ref = float(np.max(np.abs(clean.samples)))
    if peak > 0.0 and ref > 0.0:
        out = out * (ref / peak)
    return Waveform(out, clean.sample_rate)


# -- chain sampling ----------------------------------------------------------


@dataclass(frozen=True)
class StageRanges:
    """Sampling ranges for stage parameters (artifact configuration; the
    upstream pipeline does not publish distributions)."""

    snr_db: tuple[float, float] = (-5.0, 20.0)
    eq_gain_db: tuple[float, float] = (-12.0, 12.0)
    eq_freq_hz: tuple[float, float] = (100.0, 6000.0)
    peak_q: tuple[float, float] = (0.5, 2.0)
    lowpass_hz: tuple[float, float] = (2000.0, 7900.0)
    highpass_hz: tuple[float, float] = (20.0, 400.0)
    filter_orders: tuple[int, ...] = (2, 4, 8)
    bits: tuple[int, ...] = (8, 12)
    clip_threshold: tuple[float, float] = (0.1, 0.9)
    gain_db: tuple[float, float] = (-12.0, 12.0)
    resample_rates: tuple[int, ...] = (4000, 8000, 12000)


@dataclass(frozen=True)
class ChainEntry:
    family: str
    kind: str  # stage kind, or the composites "microphone_eq" / "gain_clip"
    probability: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"probability must lie in [0, 1], got {self.probability}")


DEFAULT_ENTRIES: tuple[ChainEntry, ...] = (
    ChainEntry("noise", "additive_noise", 0.3),
    ChainEntry("reverberation", "rir_convolve", 0.25),
    ChainEntry("microphone", "microphone_eq", 0.5),
    ChainEntry("adc", "lowpass", 0.7),
    ChainEntry("adc", "highpass", 0.7),
    ChainEntry("adc", "bit_depth", 0.1),
    ChainEntry("agc", "gain_clip", 0.4),
    ChainEntry("transmission", "clip", 0.25),
    ChainEntry("transmission", "gain", 0.25),
    ChainEntry("transmission", "resample", 0.4),
)


@dataclass(frozen=True)
class DistortionChain:
    """Ordered family entries with firing probabilities and ranges."""

    entries: tuple[ChainEntry, ...] = DEFAULT_ENTRIES
    ranges: StageRanges = field(default_factory=StageRanges)
    seed: int = 0


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _trim_to_peak(w: Waveform, applied: list[DistortionStage]) -> Waveform:
    peak = float(np.max(np.abs(w.samples))) if w.samples.size else 0.0
    if peak > _PEAK_LIMIT:
        trim_db = 20.0 * math.log10(_PEAK_LIMIT / peak)
        applied.append(DistortionStage("gain", {"gain_db": round(trim_db, 4)}, "headroom"))
        return Waveform(w.samples * (_PEAK_LIMIT / peak), w.sample_rate)
    return w


def _sample_stage(entry: ChainEntry, ranges: StageRanges,
                  rng: np.random.Generator, nyquist: float) -> list[DistortionStage]:
    r = ranges
    if entry.kind == "additive_noise":
        return [DistortionStage("additive_noise",
                                {"snr_db": round(rng.uniform(*r.snr_db), 4)}, entry.family)]
    if entry.kind == "rir_convolve":
        return [DistortionStage("rir_convolve", {}, entry.family)]
    if entry.kind == "microphone_eq":
        kind = ("low_shelf", "high_shelf", "peak")[rng.integers(0, 3)]
        params = {"freq_hz": round(_log_uniform(rng, *r.eq_freq_hz), 2),
                  "gain_db": round(rng.uniform(*r.eq_gain_db), 4)}
        if kind == "peak":
            params["q"] = round(rng.uniform(*r.peak_q), 4)
        return [DistortionStage(kind, params, entry.family)]
    if entry.kind == "lowpass":
        hi = min(r.lowpass_hz[1], nyquist * 0.99)
        return [DistortionStage("lowpass",
                                {"order": int(rng.choice(r.filter_orders)),
                                 "cutoff_hz": round(rng.uniform(r.lowpass_hz[0], hi), 2)},
                                entry.family)]
    if entry.kind == "highpass":
        return [DistortionStage("highpass",
                                {"order": int(rng.choice(r.filter_orders)),
                                 "cutoff_hz": round(rng.uniform(*r.highpass_hz), 2)},
                                entry.family)]
    if entry.kind == "bit_depth":
        return [DistortionStage("bit_depth", {"bits": int(rng.choice(r.bits))}, entry.family)]
    if entry.kind == "gain_clip":
        return [DistortionStage("gain", {"gain_db": round(rng.uniform(*r.gain_db), 4)},
                                entry.family),
                DistortionStage("clip", {"threshold": round(rng.uniform(*r.clip_threshold), 4)},
                                entry.family)]
    if entry.kind == "clip":
        return [DistortionStage("clip", {"threshold": round(rng.uniform(*r.clip_threshold), 4)},
                                entry.family)]
    if entry.kind == "gain":
        return [DistortionStage("gain", {"gain_db": round(rng.uniform(*r.gain_db), 4)},
                                entry.family)]
    if entry.kind == "resample":
        rates = [rr for rr in r.resample_rates if rr != 0]
        return [DistortionStage("resample", {"target_rate": int(rng.choice(rates))},
                                entry.family)]
    raise ValueError(f"unknown chain entry kind {entry.kind!r}")


def apply_stage(w: Waveform, stage: DistortionStage,
                noise: Waveform | None = None, rir: Waveform | None = None,
                rng: np.random.Generator | None = None) -> Waveform:
    p = stage.params
    if stage.kind == "additive_noise":
        if noise is None:
            raise ValueError("additive_noise stage needs a noise clip")
        return add_noise_at_snr(w, noise, float(p["snr_db"]), rng)
    if stage.kind == "rir_convolve":
        if rir is None:
            raise ValueError("rir_convolve stage needs an impulse response")
        return rir_convolve(w, rir)
    if stage.kind in ("low_shelf", "high_shelf", "peak"):
        return shelf_peak_filter(w, stage)
    if stage.kind in ("lowpass", "highpass"):
        return butterworth_filter(w, int(p["order"]), float(p["cutoff_hz"]),
                                  "low" if stage.kind == "lowpass" else "high")
    if stage.kind == "bit_depth":
        return bit_depth_reduce(w, int(p["bits"]))
    if stage.kind == "clip":
        return clip(w, float(p["threshold"]))
    if stage.kind == "gain":
        return apply_gain(w, float(p["gain_db"]))
    if stage.kind == "resample":
        return resample(w, int(p["target_rate"]))
    raise ValueError(f"unknown stage kind {stage.kind!r}")


def sample_chain(chain: DistortionChain, clean: Waveform,
                 noise_pool: Sequence[Waveform] = (),
                 rir_pool: Sequence[Waveform] = (),
                 rng: np.random.Generator | None = None
                 ) -> tuple[Waveform, list[DistortionStage]]:
    """Fire each family independently at its probability, in fixed order.

    Returns the degraded waveform and the provenance list of applied
    stages (including any headroom trims). When rng is omitted, one is
    derived from the chain's seed.
    """
    if rng is None:
        rng = np.random.default_rng(chain.seed)
    w = Waveform(clean.samples.copy(), clean.sample_rate)
    applied: list[DistortionStage] = []
    nyquist = clean.sample_rate / 2.0
    for entry in chain.entries:
        if rng.uniform() >= entry.probability:
            continue
        noise = rir = None
        if entry.kind == "additive_noise":
            if not noise_pool:
                raise ValueError("noise family fired but the noise pool is empty")
            noise = noise_pool[int(rng.integers(0, len(noise_pool)))]
        if entry.kind == "rir_convolve":
            if not rir_pool:
                raise ValueError("reverberation family fired but the RIR pool is empty")
            rir = rir_pool[int(rng.integers(0, len(rir_pool)))]
        for stage in _sample_stage(entry, chain.ranges, rng, nyquist):
            w = apply_stage(w, stage, noise=noise, rir=rir, rng=rng)
            if not np.all(np.isfinite(w.samples)):
                raise RuntimeError(f"stage {stage.kind!r} produced non-finite samples")
            if np.any(np.abs(w.samples) > _BLOWUP_LIMIT):
                raise RuntimeError(f"stage {stage.kind!r} blew up past |x| = {_BLOWUP_LIMIT}")
            applied.append(stage)
        # one trim per family so composites (gain -> clip) keep their
        # saturation interplay while the emitted signal stays in range
        w = _trim_to_peak(w, applied)
    return w, applied


def provenance_lines(applied: Sequence[DistortionStage]) -> list[str]:
    """One line per applied stage: family, kind, parameters."""
    return [stage.describe() for stage in applied]
