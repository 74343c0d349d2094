"""Operator entry point: generate, train, eval, bench.

Exit codes: 0 success, 2 usage/config, 3 I/O, 4 runtime or data problem,
5 shape/compatibility mismatch.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attention import AttentionConfig
from .benchmark import BenchConfig, LatencyRow, bench_attention, time_callable
from .data import SplitSpec, filter_snr, read_dataset, stratified_split, write_dataset
from .errors import (
    AmcnetError,
    ConfigError,
    DataError,
    DivergenceError,
    FormatError,
    ShapeError,
    StratificationError,
)
from .evaluation import emit_report, evaluate
from .model import ModelConfig, forward, init_params, load_checkpoint, save_checkpoint
from .signals import CLASS_NAMES, SynthConfig, gen_dataset
from .training import TrainConfig, train, write_history
from . import autodiff as ad

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_RUNTIME = 4
EXIT_SHAPE = 5

VARIANTS = ("baseline", "causal", "sparse")


# ---------------------------------------------------------------------------
# key = value config files; unknown keys are hard errors
# ---------------------------------------------------------------------------

def _int_tuple(raw: str) -> tuple:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {raw!r}") from exc


def _bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


# key -> (type caster, default) ; defaults mirror the dataclass defaults
CONFIG_SCHEMA = {
    "model.input_len": (int, 128),
    "model.d_model": (int, 64),
    "model.conv1_filters": (int, 32),
    "model.conv1_kernel": (int, 7),
    "model.conv2_kernel": (int, 5),
    "model.conv2_stride": (int, 2),
    "model.n_layers": (int, 2),
    "model.ffn_dim": (int, 256),
    "model.n_classes": (int, 11),
    "model.classifier_hidden": (int, 128),
    "model.dropout": (float, 0.1),
    "attention.variant": (str, "baseline"),
    "attention.n_heads": (int, 4),
    "attention.window": (int, 8),
    "attention.dropout": (float, 0.1),
    "train.lr": (float, 1e-3),
    "train.weight_decay": (float, 1e-4),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-8),
    "train.batch_size": (int, 128),
    "train.max_epochs": (int, 100),
    "train.patience": (int, 15),
    "train.seed": (int, 0),
    "train.augment_prob": (float, 0.3),
    "train.augment_std": (float, 0.02),
    "data.snr_lo": (int, -6),
    "data.snr_hi": (int, 18),
    "data.split_seed": (int, 0),
    "synth.samples_per_symbol": (int, 8),
    "synth.rrc_rolloff": (float, 0.35),
    "synth.rrc_span": (int, 6),
    "synth.cfo_max": (float, 0.01),
    "synth.random_phase": (_bool, True),
    "bench.lengths": (_int_tuple, (64, 128, 256, 512)),
    "bench.warmup": (int, 50),
    "bench.iterations": (int, 500),
}


def config_help() -> str:
    lines = ["config file keys (key = value, '#' comments):"]
    for key, (_, default) in CONFIG_SCHEMA.items():
        shown = ",".join(str(v) for v in default) if isinstance(default, tuple) else default
        lines.append(f"  {key} = {shown}")
    return "\n".join(lines)


def parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            caster = CONFIG_SCHEMA[key][0]
            try:
                values[key] = caster(value)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    synth: SynthConfig
    bench: BenchConfig
    snr_lo: int
    snr_hi: int
    split_seed: int


def build_run_config(config_path=None, overrides: dict = None) -> RunConfig:
    values = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    if config_path is not None:
        values.update(parse_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    attention = AttentionConfig(
        variant=values["attention.variant"],
        d_model=values["model.d_model"],
        n_heads=values["attention.n_heads"],
        window=values["attention.window"],
        attn_dropout=values["attention.dropout"],
    )
    model = ModelConfig(
        input_len=values["model.input_len"],
        d_model=values["model.d_model"],
        conv1_filters=values["model.conv1_filters"],
        conv1_kernel=values["model.conv1_kernel"],
        conv2_kernel=values["model.conv2_kernel"],
        conv2_stride=values["model.conv2_stride"],
        n_layers=values["model.n_layers"],
        ffn_dim=values["model.ffn_dim"],
        n_classes=values["model.n_classes"],
        classifier_hidden=values["model.classifier_hidden"],
        dropout=values["model.dropout"],
        attention=attention,
    )
    train_cfg = TrainConfig(
        lr=values["train.lr"],
        weight_decay=values["train.weight_decay"],
        beta1=values["train.beta1"],
        beta2=values["train.beta2"],
        eps=values["train.eps"],
        batch_size=values["train.batch_size"],
        max_epochs=values["train.max_epochs"],
        patience=values["train.patience"],
        seed=values["train.seed"],
        augment_prob=values["train.augment_prob"],
        augment_std=values["train.augment_std"],
    )
    synth = SynthConfig(
        samples_per_symbol=values["synth.samples_per_symbol"],
        rrc_rolloff=values["synth.rrc_rolloff"],
        rrc_span=values["synth.rrc_span"],
        cfo_max=values["synth.cfo_max"],
        random_phase=values["synth.random_phase"],
    )
    bench = BenchConfig(
        lengths=values["bench.lengths"],
        warmup=values["bench.warmup"],
        iterations=values["bench.iterations"],
    )
    return RunConfig(model, train_cfg, synth, bench,
                     values["data.snr_lo"], values["data.snr_hi"], values["data.split_seed"])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.snr_lo > args.snr_hi:
        raise ConfigError(f"--snr-lo {args.snr_lo} exceeds --snr-hi {args.snr_hi}")
    run = build_run_config(args.config)
    snr_grid = tuple(range(args.snr_lo, args.snr_hi + 1, args.snr_step))
    synth = replace(run.synth, snr_grid_db=snr_grid)
    frames = gen_dataset(args.n_per_class, synth, seed=args.seed)
    write_dataset(args.out, frames)
    print(f"wrote {len(frames)} frames to {args.out}")
    counts = np.bincount([f.label for f in frames], minlength=len(CLASS_NAMES))
    for name, count in zip(CLASS_NAMES, counts):
        print(f"  {name:<8s} {count}")
    return EXIT_OK


def _load_compatible(data_path, model_cfg: ModelConfig):
    frames, class_names = read_dataset(data_path)
    frame_len = frames[0].iq.shape[1]
    if frame_len != model_cfg.input_len:
        raise ShapeError(
            f"dataset frame length {frame_len} does not match model input length {model_cfg.input_len}"
        )
    if len(class_names) != model_cfg.n_classes:
        raise ShapeError(
            f"dataset has {len(class_names)} classes but model expects {model_cfg.n_classes}"
        )
    return frames, class_names


def cmd_train(args) -> int:
    overrides = {"attention.variant": args.variant, "train.seed": args.seed}
    run = build_run_config(args.config, overrides)
    frames, _ = _load_compatible(args.data, run.model)
    frames = filter_snr(frames, run.snr_lo, run.snr_hi)
    if not frames:
        raise DataError(f"no frames left after SNR filter [{run.snr_lo}, {run.snr_hi}]")
    train_split, val_split, test_split = stratified_split(frames, SplitSpec(seed=run.split_seed))

    result = train(run.model, run.train, train_split, val_split)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "best.amck", result.params)
    save_checkpoint(out_dir / "last.amck", result.last_params)
    write_history(out_dir / "history.csv", result.history)
    # held-out split as an artifact so `eval` can reproduce the report exactly
    write_dataset(out_dir / "test.amcd", test_split)

    report = evaluate(result.params, test_split)
    emit_report(report, out_dir / "report.txt", "text")
    emit_report(report, out_dir / "report.csv", "csv")
    print(f"best val acc {result.best_val_acc:.4f} at epoch {result.best_epoch}; "
          f"test acc {report.accuracy:.4f}; artifacts in {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    frames, _ = _load_compatible(args.data, params.config)
    if args.snr_lo is not None or args.snr_hi is not None:
        lo = args.snr_lo if args.snr_lo is not None else -(2 ** 15)
        hi = args.snr_hi if args.snr_hi is not None else 2 ** 15 - 1
        frames = filter_snr(frames, lo, hi)
    if not frames:
        raise DataError("no frames left to evaluate after SNR filter")

    report = evaluate(params, frames)
    x = np.zeros((1, 2, params.config.input_len))
    with ad.no_grad():
        mean_us, std_us = time_callable(lambda: forward(params, x, mode="eval"),
                                        warmup=10, iterations=100)
    report.mean_latency_us = mean_us
    report.latency_std_us = std_us

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_report(report, out_dir / "eval_report.txt", "text")
    emit_report(report, out_dir / "eval_report.csv", "csv")
    emit_report(report, out_dir / "eval_report.jsonl", "json-lines")
    print(f"accuracy {report.accuracy:.4f}, macro f1 {report.macro_f1_mean:.4f} "
          f"+/- {report.macro_f1_std:.4f}; reports in {out_dir}")
    return EXIT_OK


def cmd_bench(args) -> int:
    lengths = _int_tuple(args.lengths)
    if not lengths:
        raise ConfigError(f"--lengths must name at least one length, got {args.lengths!r}")
    variants = VARIANTS if args.variant == "all" else (args.variant,)
    rows = []
    for variant in variants:
        rows.extend(bench_attention(variant, args.kernel, lengths,
                                    window=args.window, warmup=args.warmup,
                                    iterations=args.iterations))
    lines = ["variant,kernel,length,mean_us,std_us"]
    lines += [f"{r.variant},{r.kernel},{r.length},{r.mean_us:.3f},{r.std_us:.3f}" for r in rows]
    output = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(output)
    sys.stdout.write(output)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amcnet",
        description="Modulation classifier: dataset synthesis, training, evaluation, latency benchmarks.",
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labeled AMCD dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, required=True, help="frames per class per SNR level")
    p.add_argument("--snr-lo", type=int, default=-6)
    p.add_argument("--snr-hi", type=int, default=18)
    p.add_argument("--snr-step", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train on an AMCD dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an AMCD dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--snr-lo", type=int, default=None)
    p.add_argument("--snr-hi", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="attention-kernel latency benchmark")
    p.add_argument("--variant", choices=VARIANTS + ("all",), default="all")
    p.add_argument("--lengths", default="64,128,256,512")
    p.add_argument("--kernel", choices=("dense", "specialized"), default="dense")
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (DivergenceError, StratificationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AmcnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
