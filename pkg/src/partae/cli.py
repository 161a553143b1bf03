"""Command-line entry point: ``partae {synth,train,denoise,eval,sweep}``.

Exit status is 0 on success, 1 for usage errors (bad flags, missing input
files) and 2 for failures while running.
"""

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from partae import checkpoint
from partae.audio import load_wav, band_spectrogram, write_spectrogram_csv, write_wav
from partae.harness import (
    MODES,
    TrainConfig,
    evaluate,
    sweep_csv,
    sweep_fg_fraction,
    train,
    validation_items,
    TrainResult,
    TrainingLog,
)
from partae.mixing import MixConfig
from partae.model import MaskVector, reconstruct_all
from partae.synth import pool_from_clips, synth_audio, synth_sources


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fraction_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_source_flags(p):
    g = p.add_argument_group("training/validation sources")
    g.add_argument("--signal", help="foreground WAV (22.05 kHz)")
    g.add_argument("--intrinsic", help="intrinsic-noise WAV mixed into signal items")
    g.add_argument("--extrinsic", help="extrinsic-noise WAV supplying noise-only items")
    g.add_argument("--synth", choices=("matched", "unmatched"),
                   help="use synthetic sources generated from --seed instead of WAV files")
    g.add_argument("--duration", type=float, default=30.0, help="synthetic source length in seconds (default 30)")


def _add_train_flags(p):
    p.add_argument("--mode", choices=MODES, default="partitioned", help="model to train (default partitioned)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.75, help="foreground penalty weight (default 0.75)")
    p.add_argument("--fg-fraction", type=float, default=0.75,
                   help="share of latents reserved for foreground (default 0.75)")
    p.add_argument("--noise-only-fraction", type=float, default=0.25,
                   help="share of each minibatch that is noise-only (default 0.25)")
    p.add_argument("--batch", type=int, default=16, help="minibatch size (default 16)")
    p.add_argument("--iters", type=int, default=20_000, help="training iterations (default 20000)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--eval-every", type=int, default=100, help="log interval in iterations (default 100)")
    p.add_argument("--intrinsic-snr", type=float, default=-10.0, help="intrinsic noise SNR in dB (default -10)")
    p.add_argument("--extrinsic-snr", type=float, default=-30.0, help="extrinsic noise SNR in dB (default -30)")
    p.add_argument("--segment-frames", type=int, default=512, help="frames per item (default 512)")
    p.add_argument("--level", type=float, default=1.0, help="RMS magnitude of the scaled extrinsic noise (default 1)")
    p.add_argument("--rho", type=float, default=0.95, help="AdaDelta decay (default 0.95)")
    p.add_argument("--eps", type=float, default=1e-6, help="AdaDelta epsilon (default 1e-6)")
    p.add_argument("--norm-batches", type=int, default=64,
                   help="batches in the normalization pre-pass (default 64)")


def build_parser():
    parser = _Parser(prog="partae", description="Partitioned autoencoder for weakly labelled spectrogram denoising.")
    parser.add_argument("--config", help="key = value file; command-line flags override its values")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic signal/intrinsic/extrinsic WAV files")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--kind", choices=("matched", "unmatched"), default="matched",
                   help="whether the two noise sources share generator settings (default matched)")
    p.add_argument("--duration", type=float, default=30.0, help="length in seconds (default 30)")
    p.add_argument("--out", help="output directory (required)")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_train_flags(p)
    _add_source_flags(p)
    p.add_argument("--log", help="write the training loss log as CSV")
    p.add_argument("--resume", help="continue from a checkpoint that carries optimizer state")
    p.add_argument("--out", help="checkpoint path (required)")

    p = sub.add_parser("denoise", help="write foreground/background/full reconstructions as CSV")
    p.add_argument("--model", help="checkpoint path (required)")
    p.add_argument("--in", dest="input", help="input WAV (22.05 kHz) (required)")
    p.add_argument("--fg-fraction", type=float, default=0.75, help="foreground share used in training (default 0.75)")
    p.add_argument("--out-prefix", help="prefix for <prefix>_{input,full,foreground,background}.csv (required)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on held-out segments")
    p.add_argument("--model", help="checkpoint path (required)")
    p.add_argument("--mode", choices=MODES, default="partitioned",
                   help="partitioned models are scored on their foreground reconstruction")
    p.add_argument("--fg-fraction", type=float, default=0.75, help="foreground share used in training (default 0.75)")
    p.add_argument("--seed", type=int, default=0, help="seed for synthetic sources and validation draws")
    p.add_argument("--intrinsic-snr", type=float, default=-10.0, help="intrinsic noise SNR in dB (default -10)")
    p.add_argument("--extrinsic-snr", type=float, default=-30.0, help="extrinsic noise SNR in dB (default -30)")
    p.add_argument("--level", type=float, default=1.0, help="RMS magnitude of the scaled extrinsic noise (default 1)")
    p.add_argument("--n-items", type=int, default=64, help="signal items to average over (default 64)")
    _add_source_flags(p)
    p.add_argument("--out", help="report CSV path (required)")

    p = sub.add_parser("sweep", help="foreground-fraction sweep against the DAE baseline")
    _add_train_flags(p)
    p.add_argument("--fractions", type=_fraction_list, default=[0.0, 0.25, 0.5, 0.75, 1.0],
                   help="comma-separated foreground fractions (default 0,0.25,0.5,0.75,1.0)")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds, 0..N-1 (default 3)")
    p.add_argument("--kind", choices=("matched", "unmatched", "both"), default="matched",
                   help="noise condition; 'both' writes <out>_matched.csv and <out>_unmatched.csv")
    p.add_argument("--duration", type=float, default=30.0, help="synthetic source length in seconds (default 30)")
    p.add_argument("--workers", type=int, default=1, help="parallel training processes (default 1)")
    p.add_argument("--out", help="CSV path (required)")
    return parser


def read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"--config {path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv, args):
    """Re-parse with config-file values as defaults so explicit flags win."""
    if not args.config:
        return args
    if not os.path.isfile(args.config):
        raise UsageError(f"--config: no such file {args.config!r}")
    values = read_config_file(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    aliases = {"lambda": "lam", "in": "input"}
    defaults = {}
    for key, raw in values.items():
        dest = aliases.get(key, key)
        if dest not in actions or dest == "help":
            raise UsageError(f"--config: unknown key {key!r} for '{args.command}'")
        action = actions[dest]
        try:
            defaults[dest] = action.type(raw) if action.type else raw
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"--config: bad value {raw!r} for {key!r}")
        if action.choices and defaults[dest] not in action.choices:
            raise UsageError(f"--config: {key!r} must be one of {list(action.choices)}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _check_required(parser, args):
    sub = parser._subparsers._group_actions[0].choices[args.command]
    for action in sub._actions:
        if action.help and action.help.endswith("(required)") and getattr(args, action.dest) is None:
            raise UsageError(f"partae {args.command}: missing required flag {action.option_strings[0]}")


def _print_config(args):
    print("resolved config:")
    for key, value in sorted(vars(args).items()):
        print(f"  {key} = {value}")
    sys.stdout.flush()


def _check_file(flag, path):
    if path is None or not os.path.isfile(path):
        raise UsageError(f"{flag}: no such file {path!r}")


def _check_range(flag, value, lo, hi, lo_open=False):
    if value < lo or value > hi or (lo_open and value == lo):
        raise UsageError(f"{flag}: value {value} outside {'(' if lo_open else '['}{lo}, {hi}]")


def _validate_train_flags(args):
    if args.lam < 0:
        raise UsageError(f"--lambda: must be non-negative, got {args.lam}")
    _check_range("--fg-fraction", args.fg_fraction, 0, 1)
    _check_range("--noise-only-fraction", args.noise_only_fraction, 0, 1)
    for flag, v in (("--batch", args.batch), ("--eval-every", args.eval_every),
                    ("--segment-frames", args.segment_frames), ("--norm-batches", args.norm_batches)):
        if v < 1:
            raise UsageError(f"{flag}: must be positive, got {v}")
    if args.iters < 0:
        raise UsageError(f"--iters: must be non-negative, got {args.iters}")
    if args.level <= 0:
        raise UsageError(f"--level: must be positive, got {args.level}")
    _check_range("--rho", args.rho, 0, 1, lo_open=True)


def _train_config(args):
    _validate_train_flags(args)
    mix = MixConfig(
        intrinsic_snr_db=args.intrinsic_snr,
        extrinsic_snr_db=args.extrinsic_snr,
        segment_frames=args.segment_frames,
        noise_only_fraction=args.noise_only_fraction,
        level=args.level,
    )
    try:
        return TrainConfig(
            mode=args.mode, lam=args.lam, fg_fraction=args.fg_fraction,
            noise_only_fraction=args.noise_only_fraction, batch_size=args.batch,
            iterations=args.iters, seed=args.seed, mix=mix, eval_every=args.eval_every,
            rho=args.rho, eps=args.eps, norm_batches=args.norm_batches,
        )
    except ValueError as exc:
        raise UsageError(f"invalid training flags: {exc}")


def _pool(args):
    if args.synth:
        return synth_sources(args.seed, args.synth, args.duration)
    for flag in ("signal", "intrinsic", "extrinsic"):
        _check_file(f"--{flag}", getattr(args, flag))
    return pool_from_clips({k: load_wav(getattr(args, k)) for k in ("signal", "intrinsic", "extrinsic")})


def cmd_synth(args):
    os.makedirs(args.out, exist_ok=True)
    for name, clip in synth_audio(args.seed, args.kind, args.duration).items():
        path = os.path.join(args.out, f"{name}.wav")
        write_wav(path, clip)
        print(f"wrote {path} ({clip.duration:.2f} s)")


def cmd_train(args):
    cfg = _train_config(args)
    if not args.synth:
        for flag in ("signal", "intrinsic", "extrinsic"):
            _check_file(f"--{flag}", getattr(args, flag))
    resume = None
    if args.resume:
        _check_file("--resume", args.resume)
        params, state, it = checkpoint.load(args.resume)
        if state is None:
            raise UsageError("--resume: checkpoint has no optimizer state")
        resume = TrainResult(params, state, TrainingLog(), it)
    pool = _pool(args)

    def progress(it, lb):
        print(f"iter {it}: loss {lb.total:.6g} recon {lb.recon:.6g} penalty {lb.penalty:.6g}", file=sys.stderr)

    result = train(cfg, pool, resume=resume, progress=progress)
    checkpoint.save(args.out, result.params, result.state, result.iteration)
    print(f"wrote {args.out} after {result.iteration} iterations")
    if args.log:
        result.log.write_csv(args.log, cfg.eval_every, start=result.iteration - cfg.iterations)
        print(f"wrote {args.log}")


def cmd_denoise(args):
    _check_file("--model", args.model)
    _check_file("--in", args.input)
    _check_range("--fg-fraction", args.fg_fraction, 0, 1)
    params, _, _ = checkpoint.load(args.model)
    try:
        mask = MaskVector.leading(params.K, args.fg_fraction)
    except ValueError as exc:
        raise UsageError(f"--fg-fraction: {exc}")
    spec = band_spectrogram(load_wav(args.input))
    T = spec.frames
    padded = np.pad(spec.values, ((0, 0), (0, (-T) % params.P)))
    full, fg, bg = (r[:, :T] for r in reconstruct_all(params, padded, mask))
    for name, values in (("input", spec.values), ("full", full), ("foreground", fg), ("background", bg)):
        path = f"{args.out_prefix}_{name}.csv"
        write_spectrogram_csv(path, values, spec.freqs)
        print(f"wrote {path}")


def cmd_eval(args):
    _check_file("--model", args.model)
    params, _, _ = checkpoint.load(args.model)
    mask = None
    if args.mode == "partitioned":
        try:
            mask = MaskVector.leading(params.K, args.fg_fraction)
        except ValueError as exc:
            raise UsageError(f"--fg-fraction: {exc}")
    pool = _pool(args)
    mix = MixConfig(intrinsic_snr_db=args.intrinsic_snr, extrinsic_snr_db=args.extrinsic_snr, level=args.level)
    items = validation_items(pool, mix, args.seed, n_signal=args.n_items)
    report = evaluate(params, mask, items)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for f in dataclasses.fields(report):
            if f.name != "loss_curve":
                w.writerow([f.name, repr(getattr(report, f.name))])
    print(f"snr_vs_clean_db = {report.snr_vs_clean_db:.3f}")
    print(f"wrote {args.out}")


def cmd_sweep(args):
    cfg = _train_config(args)
    if args.seeds < 1:
        raise UsageError(f"--seeds: must be positive, got {args.seeds}")
    for f in args.fractions:
        try:
            MaskVector.leading(cfg.K, f)
        except ValueError as exc:
            raise UsageError(f"--fractions: {exc}")
    kinds = ("matched", "unmatched") if args.kind == "both" else (args.kind,)
    for kind in kinds:
        rows = sweep_fg_fraction(cfg, args.fractions, list(range(args.seeds)), kind, args.duration,
                                 workers=args.workers)
        out = args.out
        if len(kinds) > 1:
            stem, ext = os.path.splitext(args.out)
            out = f"{stem}_{kind}{ext or '.csv'}"
        with open(out, "w", newline="") as fh:
            fh.write(sweep_csv(rows))
        print(f"wrote {out}")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "denoise": cmd_denoise, "eval": cmd_eval, "sweep": cmd_sweep}


def run(argv):
    parser = build_parser()
    try:
        if not argv:
            raise UsageError(parser.format_usage().strip())
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        args = _apply_config(parser, argv, args)
        _check_required(parser, args)
        _print_config(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
