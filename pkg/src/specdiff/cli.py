"""Command-line interface tying the modules into reproducible runs.

Every command is a pure function of (inputs, config, seed): repeated
invocations produce byte-identical outputs. Exit codes: 0 success,
1 usage, 2 validation failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import distort as dst
from .config import (
    ConfigError,
    RunConfig,
    build_run_config,
    derive_rng,
    load_config_file,
    with_overrides,
)
from .metrics import report as metric_report
from .sampling import (
    ReverseSchedule,
    forward_simulate,
    reverse_ensemble_stats,
    truncated_init,
)
from .scores import (
    ToyScoreNet,
    analytic_gaussian_score,
    make_toy_gaussian_dataset,
    oracle_score,
    predictive_identity,
    predictive_oracle,
    predictive_spectral_subtraction,
    train_toy,
)
from .sde import SdeParams, kernel_mean, kernel_std
from .spectral import amplitude_transform, enhance, stft
from .wavio import WavFormatError, wav_read, wav_write

KERNEL_CHECK_TOL = 0.02


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 for usage problems, not argparse's 2
        raise _UsageError(message)


def _print_header(cfg: RunConfig) -> None:
    for line in cfg.lines():
        print(f"# {line}")


def _sde_from_args(args, cfg: RunConfig | None = None) -> SdeParams:
    base = cfg.sde if cfg is not None else SdeParams.bbed()
    variant = getattr(args, "sde", None) or base.variant
    if variant == "ouve":
        return SdeParams.ouve(
            gamma=args.gamma if args.gamma is not None else (base.gamma or 1.5),
            c=args.c if args.c is not None else (0.01 if base.variant != "ouve" else base.c),
            k=args.k if args.k is not None else (10.0 if base.variant != "ouve" else base.k),
            horizon_t=args.horizon if args.horizon is not None
            else (1.0 if base.variant != "ouve" else base.horizon_t),
        )
    return SdeParams.bbed(
        c=args.c if args.c is not None else (0.51 if base.variant != "bbed" else base.c),
        k=args.k if args.k is not None else (2.6 if base.variant != "bbed" else base.k),
        horizon_t=args.horizon if args.horizon is not None
        else (0.999 if base.variant != "bbed" else base.horizon_t),
    )


def _load_run_config(args) -> RunConfig:
    cfg = build_run_config(load_config_file(args.config)) if getattr(args, "config", None) \
        else RunConfig()
    overrides = {}
    for attr, key in (("alpha", "fusion"), ("trs", "t_rs"), ("steps", "n_steps"),
                      ("seed", "seed")):
        val = getattr(args, attr, None)
        if val is None:
            continue
        if attr == "alpha":
            from .spectral import FusionConfig

            overrides["fusion"] = FusionConfig(alpha=val)
        else:
            overrides[key] = val
    return with_overrides(cfg, **overrides)


# -- commands ----------------------------------------------------------------


def _cmd_kernel_check(args) -> int:
    params = _sde_from_args(args)
    rng = derive_rng(args.seed, "kernel-check")
    stats = forward_simulate(params, args.x0, args.y0, args.steps, args.paths, rng)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            stats.write_csv(fh)
    lo = 0.1 * params.horizon_t
    worst_mean = worst_std = 0.0
    for t, m, v in zip(stats.times, stats.mean, stats.variance):
        if t < lo:
            continue
        ref_m = float(kernel_mean(params, np.asarray(args.x0), np.asarray(args.y0), t))
        ref_s = kernel_std(params, t)
        if ref_m != 0.0:
            worst_mean = max(worst_mean, abs(m - ref_m) / abs(ref_m))
        worst_std = max(worst_std, abs(math.sqrt(v) - ref_s) / ref_s)
    print(f"max relative deviation, mean: {worst_mean:.6f}")
    print(f"max relative deviation, std:  {worst_std:.6f}")
    ok = worst_mean <= KERNEL_CHECK_TOL and worst_std <= KERNEL_CHECK_TOL
    print(f"kernel-check: {'PASS' if ok else 'FAIL'} (tolerance {KERNEL_CHECK_TOL})")
    return 0 if ok else 2


def _cmd_simulate(args) -> int:
    params = _sde_from_args(args)
    rng = derive_rng(args.seed, f"simulate-{args.mode}")
    if args.mode == "forward":
        stats = forward_simulate(params, args.x0, args.y0, args.steps, args.paths, rng)
    else:
        t_rs = args.trs if args.trs is not None else params.horizon_t
        schedule = ReverseSchedule.truncated(params.horizon_t, args.steps, t_rs) \
            if t_rs < params.horizon_t else ReverseSchedule.full(params.horizon_t, args.steps)
        score = oracle_score(params, np.full(args.paths, float(args.x0)))
        x_init = truncated_init(params, np.full(args.paths, float(args.x0)),
                                np.full(args.paths, float(args.y0)), schedule.start, rng)
        stats = reverse_ensemble_stats(params, score, x_init, args.y0, schedule, rng)
    with open(args.out, "w", encoding="utf-8") as fh:
        stats.write_csv(fh)
    print(f"wrote {args.out} ({len(stats.times)} rows, {stats.n_paths} paths)")
    return 0


def _make_predictive(args, cfg: RunConfig, clean_transformed):
    if args.pred == "identity":
        return predictive_identity()
    if args.pred == "specsub":
        return predictive_spectral_subtraction()
    if args.pred == "oracle":
        if clean_transformed is None:
            raise ConfigError("--pred oracle requires --clean")
        return predictive_oracle(clean_transformed)
    raise ConfigError(f"unknown predictive estimator {args.pred!r}")


def _make_score(args, cfg: RunConfig, clean_transformed):
    spec = args.score
    if spec == "oracle":
        if clean_transformed is None:
            raise ConfigError("--score oracle requires --clean")
        return oracle_score(cfg.sde, np.abs(clean_transformed))
    if spec == "analytic":
        return analytic_gaussian_score(cfg.sde, args.score_m0, args.score_s0)
    if spec.startswith("model:"):
        path = spec.split(":", 1)[1] or cfg.model_path
        if not path:
            raise ConfigError("--score model: needs a path (or model.path in the config)")
        return ToyScoreNet.load(path).score_fn(use_ema=True)
    raise ConfigError(f"unknown score source {spec!r}")


def _cmd_enhance(args) -> int:
    cfg = _load_run_config(args)
    _print_header(cfg)
    degraded = wav_read(args.infile, target_rate=16000)
    clean_transformed = None
    if args.clean:
        clean = wav_read(args.clean, target_rate=16000)
        clean_transformed = amplitude_transform(stft(clean, cfg.stft), cfg.transform)
    pred = _make_predictive(args, cfg, clean_transformed)
    score = _make_score(args, cfg, clean_transformed)
    rng = derive_rng(cfg.seed, "enhance")
    out = enhance(degraded, pred, score, cfg.sde, cfg.schedule(), cfg.fusion,
                  cfg.stft, cfg.transform, rng)
    wav_write(args.out, out, fmt=args.format)
    print(f"wrote {args.out}")
    return 0


def _load_pool(directory) -> list:
    pool = []
    for path in sorted(Path(directory).glob("*.wav")):
        pool.append(wav_read(path, target_rate=16000))
    return pool


def _cmd_distort(args) -> int:
    clean = wav_read(args.infile, target_rate=16000)
    noise_pool = _load_pool(args.noise_dir) if args.noise_dir else []
    rir_pool = _load_pool(args.rir_dir) if args.rir_dir else []
    entries = []
    for entry in dst.DEFAULT_ENTRIES:
        if entry.kind == "additive_noise" and not noise_pool:
            print("note: no noise pool, disabling the noise family", file=sys.stderr)
            continue
        if entry.kind == "rir_convolve" and not rir_pool:
            print("note: no RIR pool, disabling the reverberation family", file=sys.stderr)
            continue
        entries.append(entry)
    chain = dst.DistortionChain(entries=tuple(entries), seed=args.seed)
    rng = derive_rng(args.seed, "distort")
    degraded, applied = dst.sample_chain(chain, clean, noise_pool, rir_pool, rng)
    wav_write(args.out, degraded, fmt=args.format)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for line in dst.provenance_lines(applied):
                fh.write(line + "\n")
    print(f"wrote {args.out} ({len(applied)} stages applied)")
    return 0


def _cmd_train_toy(args) -> int:
    cfg = with_overrides(RunConfig(), seed=args.seed)
    _print_header(cfg)
    rng = derive_rng(cfg.seed, "train-toy")
    dataset, _ = make_toy_gaussian_dataset(args.samples, rng)
    net = ToyScoreNet(hidden=args.hidden, rng=derive_rng(cfg.seed, "train-toy-init"))
    net, history = train_toy(net, cfg.sde, dataset, epochs=args.epochs, lr=args.lr,
                             rng=rng, batch_size=args.batch)
    for epoch, loss in enumerate(history):
        print(f"epoch {epoch:3d}  dsm-loss {loss:.6f}")
    net.save(args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    cfg = RunConfig()
    ref = wav_read(args.ref, target_rate=16000)
    est = wav_read(args.est, target_rate=16000)
    if len(est.samples) != len(ref.samples):
        raise ConfigError("reference and estimate must have equal length")
    rep = metric_report(ref, est, stft(ref, cfg.stft), stft(est, cfg.stft))
    file_id = args.id or Path(args.est).stem
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            rep.write_csv(fh, file_id)
    print(rep.csv_header())
    print(rep.csv_row(file_id))
    return 0


def _cmd_sr_filter(args) -> int:
    w = wav_read(args.infile, target_rate=16000)
    out = dst.butterworth_filter(w, args.order, args.cutoff, "low")
    wav_write(args.out, out, fmt=args.format)
    print(f"wrote {args.out}")
    return 0


# -- parser ------------------------------------------------------------------


def _add_sde_flags(p) -> None:
    p.add_argument("--sde", choices=("bbed", "ouve"), default="bbed")
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--x0", type=float, default=2.0,
                   help="clean endpoint (default keeps the mean away from 0 "
                        "so relative deviations stay meaningful)")
    p.add_argument("--y0", type=float, default=1.0, help="degraded endpoint")


def build_parser() -> _Parser:
    parser = _Parser(prog="specdiff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-check", help="verify closed-form kernel moments by Monte Carlo")
    _add_sde_flags(p)
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional trajectory CSV")
    p.set_defaults(func=_cmd_kernel_check)

    p = sub.add_parser("simulate", help="emit forward/reverse trajectory statistics as CSV")
    p.add_argument("--mode", choices=("forward", "reverse"), required=True)
    _add_sde_flags(p)
    p.add_argument("--paths", type=int, default=10000)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--trs", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("enhance", help="run the full enhancement pipeline on a WAV file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--pred", choices=("identity", "oracle", "specsub"), default="identity")
    p.add_argument("--score", default="analytic",
                   help="oracle | analytic | model:PATH")
    p.add_argument("--score-m0", type=float, default=0.0)
    p.add_argument("--score-s0", type=float, default=1.0)
    p.add_argument("--clean", default=None, help="clean reference for the oracle modes")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--trs", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("distort", help="apply the probabilistic degradation chain")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--noise-dir", default=None)
    p.add_argument("--rir-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="provenance log path")
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=_cmd_distort)

    p = sub.add_parser("train-toy", help="train the toy score model on synthetic data")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--samples", type=int, default=4096)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.003)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("metrics", help="spectral/waveform metrics for a reference/estimate pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--id", default=None)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("sr-filter", help="bandwidth-limitation fixture (Butterworth low-pass)")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cutoff", type=float, default=4000.0)
    p.add_argument("--order", type=int, default=12)
    p.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    p.set_defaults(func=_cmd_sr_filter)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, WavFormatError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
