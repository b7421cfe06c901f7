"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 shape or
feature mismatch.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .bench import run_bench
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, load_config
from .dataio import (CLASS_NAMES, SIGNAL_LENGTH, DataError, FeatureError, FeatureStats, apply_stats,
                     load_dataset, normalize_length, read_sample_csv, standardize)
from .model import Ablation, build_model
from .tensor import ShapeError
from .trainer import evaluate, train
from .wavelet import MorletParams, ScaleGrid, magnitudes

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SHAPE = 0, 2, 3, 4

log = logging.getLogger("tcctnet")


class ShapeMismatch(Exception):
    pass


def _names(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


# -- train ------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or [])
    data = cfg.data
    if data.manifest is None:
        raise ConfigError("data.manifest: required for training")
    root = data.root if data.root is not None else data.manifest.parent
    train_ds = load_dataset(root, data.manifest, data.features, data.train_split, data.signal_length)
    val_ds = load_dataset(root, data.manifest, data.features, data.val_split, data.signal_length)
    if len(train_ds) == 0:
        raise DataError(f"no usable samples in split {data.train_split!r}")
    if len(val_ds) == 0:
        raise DataError(f"no usable samples in split {data.val_split!r}")
    stats = None
    if data.standardize:
        train_ds, stats = standardize(train_ds)
        val_ds, _ = standardize(val_ds, stats)

    model = build_model(len(data.features), data.signal_length, cfg.train.seed, ablation=cfg.ablation,
                        fusion_mode=cfg.loss.fusion_mode, ct=cfg.ct, tc=cfg.tc)
    for path in (cfg.output.checkpoint, cfg.output.metrics):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
    meta = {"features": list(data.features), "stats": stats.to_dict() if stats else None,
            "classes": list(CLASS_NAMES)}

    def progress(r):
        if not args.quiet:
            print(f"epoch {r.epoch:3d}  loss {r.train_loss:.4f}  train {100 * r.train_acc:6.2f}%  "
                  f"val {100 * r.val_acc:6.2f}%  lr {r.lr:.2e}  {r.seconds:.1f}s", flush=True)

    _, report = train(train_ds, val_ds, model, cfg.train, cfg.loss, metrics_path=cfg.output.metrics,
                      checkpoint_path=cfg.output.checkpoint, checkpoint_meta=meta, on_epoch=progress)
    print(f"best validation accuracy {100 * report.best_val_acc:.2f}% at epoch {report.best_epoch}")
    print(f"checkpoint: {cfg.output.checkpoint}")
    print(f"metrics: {cfg.output.metrics}")
    return EXIT_OK


# -- shared loading for eval / bench ------------------------------------------------

def _ablation(args) -> Optional[Ablation]:
    flags = dict(ct_only=args.ct_only, tc_only=args.tc_only, no_attention=args.no_attention)
    if not any(flags.values()):
        return None
    try:
        return Ablation(**flags)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_split(args, meta, model):
    features = _names(args.features) if args.features else list(meta.get("features") or [])
    if not features:
        raise ConfigError("checkpoint does not record its features; pass --features")
    if len(features) != model.n_features:
        raise ShapeMismatch(f"checkpoint expects {model.n_features} features, data selection has {len(features)}")
    manifest = Path(args.manifest)
    root = Path(args.data_root) if args.data_root else manifest.parent
    ds = load_dataset(root, manifest, features, args.split, model.ct_cfg.signal_length)
    if len(ds) == 0:
        raise DataError(f"no usable samples in split {args.split!r}")
    if meta.get("stats"):
        ds, _ = standardize(ds, FeatureStats.from_dict(meta["stats"]))
    return ds


def _load_model(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {path}") from None
    except CheckpointError as exc:
        raise DataError(str(exc)) from None


def cmd_eval(args) -> int:
    ablation = _ablation(args)
    model, meta = _load_model(args.checkpoint)
    ds = _load_split(args, meta, model)
    result = evaluate(ds, model, ablation)
    print(result.format(meta.get("classes") or CLASS_NAMES))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.iters < 1:
        raise ConfigError("--iters must be >= 1")
    if args.warmup < 0:
        raise ConfigError("--warmup must be >= 0")
    model, meta = _load_model(args.checkpoint)
    ds = _load_split(args, meta, model)
    x, y = ds.arrays(model.dtype)  # parsing happens here, outside every timed region
    report = run_bench(model, x, y, args.warmup, args.iters, workers=args.workers,
                       train_epoch=not args.no_train_epoch, threads=None if args.parallel else 1)
    for line in report.lines():
        print(line)
    if args.out:
        report.write_csv(args.out)
        print(f"written: {args.out}")
    return EXIT_OK


# -- infer / scalogram ---------------------------------------------------------------

def _read_signal(path, features: Sequence[str], length: int) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"sample file not found: {path}")
    raw = read_sample_csv(path, features)
    if raw.shape[1] == 0:
        raise DataError(f"{path}: no frames")
    return normalize_length(raw, length)


def cmd_infer(args) -> int:
    model, meta = _load_model(args.checkpoint)
    features = list(meta.get("features") or [])
    if len(features) != model.n_features:
        raise ShapeMismatch(f"checkpoint expects {model.n_features} features, metadata lists {len(features)}")
    x = _read_signal(args.sample, features, model.ct_cfg.signal_length)
    if meta.get("stats"):
        x = apply_stats(x, FeatureStats.from_dict(meta["stats"]))
    probs = model.predict_proba(x[None].astype(model.dtype))[0]
    names = meta.get("classes") or CLASS_NAMES
    for name, p in zip(names, probs):
        print(f"{name:>16s}  {p:.4f}")
    print(f"prediction: {names[int(np.argmax(probs))]}")
    return EXIT_OK


def cmd_scalogram(args) -> int:
    features = _names(args.features)
    if not features:
        raise ConfigError("--features: at least one feature is required")
    try:
        grid = ScaleGrid.geometric(args.n_scales, args.f_min, args.f_max, args.sampling_rate, args.center_frequency)
        morlet = MorletParams(args.bandwidth, args.center_frequency)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    x = _read_signal(args.sample, features, args.length)
    mags = magnitudes(x, grid, morlet)  # F, S, T
    write_scalogram_csv(args.out, features, grid, mags)
    print(f"written: {args.out} ({len(features)} features x {len(grid)} scales x {x.shape[1]} frames)")
    return EXIT_OK


def write_scalogram_csv(path, features: Sequence[str], grid: ScaleGrid, mags: np.ndarray) -> None:
    T = mags.shape[-1]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "scale"] + [f"t{i}" for i in range(T)])
        for f, name in enumerate(features):
            for s, scale in enumerate(grid.scales):
                w.writerow([name, repr(float(scale))] + [repr(float(v)) for v in mags[f, s]])


def read_scalogram_csv(path):
    """Return ``(features, scales, magnitudes F×S×T)`` from a file written by ``scalogram``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    features = list(dict.fromkeys(r[0] for r in rows))
    scales = list(dict.fromkeys(float(r[1]) for r in rows))
    data = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(features), len(scales), -1)
    return features, scales, data


# -- synth ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synthetic import DEFAULT_FEATURES, write_corpus

    out = Path(args.out)
    manifest = write_corpus(out, args.n_train, args.n_val, args.seed, args.noise)
    cfg = out / "run.cfg"
    cfg.write_text(
        "data.manifest = manifest.csv\n"
        f"data.features = {', '.join(DEFAULT_FEATURES)}\n"
        "train.max_epochs = 30\n"
        "train.early_stop_patience = 10\n"
        "output.checkpoint = model.ckpt\n"
        "output.metrics = metrics.csv\n"
    )
    print(f"manifest: {manifest}")
    print(f"config: {cfg}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def _add_split_args(p):
    p.add_argument("--checkpoint", required=True, help="checkpoint written by 'train'")
    p.add_argument("--manifest", required=True, help="manifest CSV (sample_id,path,label,split)")
    p.add_argument("--data-root", help="directory sample paths are relative to (default: manifest's directory)")
    p.add_argument("--split", default="val", help="manifest split to use (default: val)")
    p.add_argument("--features", help="comma-separated feature columns (default: those stored in the checkpoint)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcctnet", description=__doc__.split("\n")[0],
                                     epilog="exit codes: 0 ok, 2 config, 3 data, 4 shape/feature mismatch")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", type=Path, help="flat 'section.key = value' config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry (repeatable)")
    p.add_argument("--quiet", action="store_true", help="do not print per-epoch progress")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint on a split")
    _add_split_args(p)
    for flag in ("--ct-only", "--tc-only", "--no-attention"):
        p.add_argument(flag, action="store_true", help=f"evaluate with {flag[2:]} ablation")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="class probabilities for one sample CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sample", required=True, help="per-frame feature CSV")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="inference latency and training-epoch timing")
    _add_split_args(p)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--workers", type=int, default=1, help="threads for whole-split inference")
    p.add_argument("--parallel", action="store_true", help="let BLAS use multiple threads (default: one)")
    p.add_argument("--no-train-epoch", action="store_true", help="skip the training-epoch measurement")
    p.add_argument("--out", help="write the report as CSV")
    p.set_defaults(func=cmd_bench, ct_only=False, tc_only=False, no_attention=False)

    p = sub.add_parser("scalogram", help="export CWT magnitudes of one sample")
    p.add_argument("--sample", required=True)
    p.add_argument("--features", required=True, help="comma-separated feature columns")
    p.add_argument("--out", required=True)
    p.add_argument("--length", type=int, default=SIGNAL_LENGTH)
    p.add_argument("--n-scales", type=int, default=32)
    p.add_argument("--f-min", type=float, default=0.1)
    p.add_argument("--f-max", type=float, default=15.0)
    p.add_argument("--sampling-rate", type=float, default=30.0)
    p.add_argument("--bandwidth", type=float, default=1.0)
    p.add_argument("--center-frequency", type=float, default=1.0)
    p.set_defaults(func=cmd_scalogram)

    p = sub.add_parser("synth", help="write a synthetic frequency-coded corpus and a matching config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=64)
    p.add_argument("--n-val", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.5)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FeatureError, ShapeMismatch, ShapeError) as exc:
        print(f"shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
