"""Command-line entry point.

Subcommands: gen-data, train, eval, verify, count-params, bench.
Exit codes: 0 success, 1 training or verification failure, 2 usage or
configuration error.
"""

import argparse
import os
import sys

import numpy as np

from .analysis import (
    CONVENTIONS,
    bench_architectures,
    count_params,
    format_param_report,
    format_speed_reports,
    param_report_csv,
    speed_report_csv,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import load_dataset, preprocess_dataset, save_dataset, split_dataset, synth_generate
from .errors import ConfigError, InputError, MpuRnnError
from .network import ensemble_predict, forward, init_params
from .rng import Rng
from .runconfig import SCHEMA, parse_config_file, resolve
from .training import evaluate, train
from .verify import run_verification


def _add_config_flags(parser, keys):
    parser.add_argument("--config", metavar="FILE", help="flat key=value config file")
    for key in keys:
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, dest=key, metavar="V", help=SCHEMA[key][2])


def _resolve(args, keys):
    file_values = parse_config_file(args.config) if args.config else {}
    flag_values = {key: getattr(args, key) for key in keys}
    return resolve(file_values, flag_values)


_NETWORK_KEYS = (
    "cell", "arch", "layers", "hidden", "input_dim", "classes",
    "readout", "readout_matrices", "skip", "dropout_keep",
)
_TRAIN_KEYS = _NETWORK_KEYS + (
    "epochs", "batch_size", "seed", "lr", "rmsprop_decay", "rmsprop_eps",
    "clip_norm", "patience", "train_path", "val_path", "test_path",
    "out_dir", "threads",
)


def cmd_gen_data(args):
    ds = synth_generate(
        num_classes=args.classes,
        per_class=args.per_class,
        seed=args.seed,
        dim=args.dim,
        jitter=args.jitter,
    )
    train_ds, val_ds, test_ds = split_dataset(ds, args.train_frac, args.val_frac, args.seed)
    os.makedirs(args.out, exist_ok=True)
    for split in (train_ds, val_ds, test_ds):
        path = os.path.join(args.out, f"{split.name}.txt")
        save_dataset(path, split)
        print(f"{path}: {len(split)} samples, {split.num_classes} classes")
    return 0


def _load_split(path, name):
    if not path:
        return None
    return preprocess_dataset(load_dataset(path, name=name))


def cmd_train(args):
    rc = _resolve(args, _TRAIN_KEYS)
    if not rc.train_path:
        raise ConfigError("train_path is required (flag --train-path or config file)")
    cfg = rc.network_config()
    tcfg = rc.train_config()
    train_ds = _load_split(rc.train_path, "train")
    val_ds = _load_split(rc.val_path, "val")
    test_ds = _load_split(rc.test_path, "test")
    params = init_params(cfg, Rng(rc.seed).spawn(0))
    best, metrics = train(params, cfg, train_ds, tcfg, val_ds=val_ds, log=print)
    os.makedirs(rc.out_dir, exist_ok=True)
    ckpt_path = os.path.join(rc.out_dir, "model.ckpt")
    metrics_path = os.path.join(rc.out_dir, "metrics.csv")
    save_checkpoint(ckpt_path, best, cfg)
    metrics.to_csv(metrics_path)
    print(f"checkpoint: {ckpt_path}")
    print(f"metrics:    {metrics_path}")
    if test_ds is not None:
        print(f"test accuracy: {evaluate(best, cfg, test_ds):.4f}")
    else:
        print(f"best validation accuracy: {max(metrics.val_acc):.4f}")
    return 0


def cmd_eval(args):
    paths = [p for chunk in args.ckpt for p in chunk.split(",") if p]
    if not paths:
        raise ConfigError("no checkpoints given")
    if len(paths) > 1 and not args.ensemble:
        raise ConfigError("multiple checkpoints need --ensemble")
    members = [load_checkpoint(p) for p in paths]
    cfg0 = members[0][1]
    for _, cfg in members[1:]:
        if cfg.num_classes != cfg0.num_classes or cfg.input_dim != cfg0.input_dim:
            raise ConfigError("ensemble members disagree on classes or input dots")
    ds = preprocess_dataset(load_dataset(args.data, name="eval"))
    if ds.dim != cfg0.input_dim:
        raise ConfigError(
            f"dataset dots have {ds.dim} fields, checkpoints expect {cfg0.input_dim}"
        )
    hits = 0
    for s in ds.samples:
        logit_sets = [forward(s.dots, params, cfg)[0] for params, cfg in members]
        if int(np.argmax(ensemble_predict(logit_sets))) == s.label:
            hits += 1
    acc = hits / len(ds)
    kind = "ensemble" if len(members) > 1 else "accuracy"
    print(f"{kind}: {acc:.4f} on {len(ds)} samples ({len(members)} model(s))")
    return 0


def cmd_verify(args):
    results = run_verification(only=args.only)
    width = max(len(name) for name, _, _ in results)
    failed = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        failed += 0 if ok else 1
    if failed:
        print(f"{failed} suite(s) failed")
        return 1
    return 0


def cmd_count_params(args):
    rc = _resolve(args, _NETWORK_KEYS)
    cfg = rc.network_config()
    convention = args.convention.replace("-", "_")
    if convention not in CONVENTIONS:
        raise ConfigError(f"unknown convention {args.convention!r}")
    report = count_params(cfg, convention)
    print(format_param_report(cfg, report))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(param_report_csv(cfg, report))
        print(f"csv: {args.csv}")
    return 0


def cmd_bench(args):
    rc = _resolve(args, _NETWORK_KEYS + ("seed",))
    cfg = rc.network_config()
    if args.T < 2:
        raise ConfigError("--T must be at least 2")
    reports, ratio = bench_architectures(cfg, args.T, repetitions=args.reps, seed=rc.seed)
    ordered = [reports[a] for a in ("general", "hybrid", "bidirectional")]
    print(format_speed_reports(ordered))
    print(f"hybrid : bidirectional wall-clock ratio {ratio:.3f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(speed_report_csv(ordered))
        print(f"csv: {args.csv}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mpu-rnn",
        description="Memory-pool-unit recurrent networks for dot-sequence classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a deterministic synthetic dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=120)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--jitter", type=float, default=1.5)
    p.add_argument("--out", default="data")
    p.add_argument("--train-frac", type=float, default=500.0 / 600.0)
    p.add_argument("--val-frac", type=float, default=50.0 / 600.0)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and keep the best checkpoint")
    _add_config_flags(p, _TRAIN_KEYS)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoint(s) on a dataset")
    p.add_argument("--ckpt", action="append", required=True,
                   help="checkpoint path (repeat or comma-separate for ensembles)")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--ensemble", action="store_true",
                   help="sum logits over all checkpoints before argmax")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify", help="run the self-check suites")
    p.add_argument("--only", help="run a single suite by name")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("count-params", help="parameter accounting report")
    _add_config_flags(p, _NETWORK_KEYS)
    p.add_argument("--convention", default="paper-table",
                   help="paper-table or full-actual")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(fn=cmd_count_params)

    p = sub.add_parser("bench", help="wall-clock and step-count comparison")
    _add_config_flags(p, _NETWORK_KEYS + ("seed",))
    p.add_argument("--T", type=int, default=100, help="sequence length")
    p.add_argument("--reps", type=int, default=20, help="timed repetitions")
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MpuRnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
