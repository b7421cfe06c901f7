"""Run configuration: flat ``section.key = value`` files plus command-line overrides.

Example::

    # paths are relative to the config file
    data.root = corpus
    data.manifest = corpus/manifest.csv
    data.features = pose_Rx, pose_Ry
    train.max_epochs = 60
    train.scheduler = 50:0.5, 100:0.5
    ablation.no_attention = true
    output.checkpoint = run/model.ckpt
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Tuple

from .augment import SRConfig
from .dataio import SIGNAL_LENGTH
from .fusion import LossConfig
from .model import Ablation
from .stream_ct import CTConfig
from .stream_tc import TCConfig
from .trainer import TrainConfig
from .wavelet import MorletParams, ScaleGrid


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _names(text: str) -> Tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _milestones(text: str) -> Tuple[Tuple[int, float], ...]:
    out = []
    for item in _names(text):
        epoch, _, mult = item.partition(":")
        if not mult:
            raise ValueError(f"milestone {item!r} must look like epoch:multiplier")
        out.append((int(epoch), float(mult)))
    return tuple(out)


@dataclass(frozen=True)
class DataConfig:
    root: Optional[Path] = None
    manifest: Optional[Path] = None
    features: Tuple[str, ...] = ("pose_Rx", "pose_Ry")
    train_split: str = "train"
    val_split: str = "val"
    standardize: bool = True
    signal_length: int = SIGNAL_LENGTH


@dataclass(frozen=True)
class GridConfig:
    n_scales: int = 32
    f_min: float = 0.1
    f_max: float = 15.0
    sampling_rate: float = 30.0
    bandwidth: float = 1.0
    center_frequency: float = 1.0


@dataclass(frozen=True)
class OutputConfig:
    checkpoint: Path = Path("model.ckpt")
    metrics: Path = Path("metrics.csv")


_SCHEMA: Dict[str, Dict[str, Callable[[str], object]]] = {
    "data": {"root": Path, "manifest": Path, "features": _names, "train_split": str, "val_split": str,
             "standardize": _bool, "signal_length": int},
    "ct": {"temporal_filters": int, "temporal_kernel": int, "pool_kernel": int, "pool_stride": int, "embed_dim": int,
           "heads": int, "attention_layers": int, "ff_expansion": int, "conv_dropout": float, "dropout": float,
           "dense_hidden": int},
    "tc": {"conv1_channels": int, "conv1_kernel": int, "pool": int, "conv2_channels": int, "conv2_height": int,
           "dense_hidden": int, "dropout": float},
    "cwt": {"n_scales": int, "f_min": float, "f_max": float, "sampling_rate": float, "bandwidth": float,
            "center_frequency": float},
    "sr": {"segments": int},
    "loss": {"lam": float, "fusion_mode": str},
    "train": {"learning_rate": float, "beta1": float, "beta2": float, "adam_epsilon": float, "batch_size": int,
              "scheduler": _milestones, "early_stop_patience": int, "max_epochs": int, "seed": int},
    "ablation": {"ct_only": _bool, "tc_only": _bool, "no_attention": _bool, "no_augmentation": _bool},
    "output": {"checkpoint": Path, "metrics": Path},
}

_PATH_KEYS = {("data", "root"), ("data", "manifest"), ("output", "checkpoint"), ("output", "metrics")}


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = DataConfig()
    ct: CTConfig = CTConfig()
    tc: TCConfig = field(default_factory=TCConfig)
    sr: SRConfig = SRConfig()
    loss: LossConfig = LossConfig()
    train: TrainConfig = TrainConfig()
    output: OutputConfig = OutputConfig()

    @property
    def ablation(self) -> Ablation:
        return self.train.ablation


def parse_lines(lines: Iterable[str], origin: str = "<config>") -> Dict[Tuple[str, str], str]:
    """``section.key = value`` lines → raw string values; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"{origin}:{lineno}: expected 'section.key = value', got {line.strip()!r}")
        values[(section, name.strip())] = value.strip()
    return values


def _convert(raw: Dict[Tuple[str, str], str], base: Optional[Path]) -> Dict[str, Dict[str, object]]:
    out: Dict[str, Dict[str, object]] = {s: {} for s in _SCHEMA}
    for (section, name), text in raw.items():
        if section not in _SCHEMA or name not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{name}")
        try:
            value = _SCHEMA[section][name](text)
        except ValueError as exc:
            raise ConfigError(f"{section}.{name}: {exc}") from None
        if (section, name) in _PATH_KEYS and base is not None and not value.is_absolute():
            value = base / value
        out[section][name] = value
    return out


def _build(section: str, factory, kwargs):
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        msg = str(exc)
        named = next((k for k in kwargs if k in msg), None)
        prefix = f"{section}.{named}" if named else section
        raise ConfigError(f"{prefix}: {msg}") from None


def build_config(raw: Dict[Tuple[str, str], str], base: Optional[Path] = None) -> RunConfig:
    """Validate every section and assemble a :class:`RunConfig`."""
    v = _convert(raw, base)
    data = _build("data", DataConfig, v["data"])
    if not data.features:
        raise ConfigError("data.features: at least one feature is required")
    if data.signal_length < 1:
        raise ConfigError("data.signal_length: must be positive")
    shape = {"n_features": len(data.features), "signal_length": data.signal_length}
    grid_cfg = _build("cwt", GridConfig, v["cwt"])
    morlet = _build("cwt", MorletParams, {"bandwidth": grid_cfg.bandwidth,
                                          "center_frequency": grid_cfg.center_frequency})
    grid = _build("cwt", ScaleGrid.geometric, {"n_scales": grid_cfg.n_scales, "f_min": grid_cfg.f_min,
                                               "f_max": grid_cfg.f_max, "sampling_rate": grid_cfg.sampling_rate,
                                               "center_frequency": grid_cfg.center_frequency})
    ct = _build("ct", CTConfig, {**v["ct"], **shape})
    tc = _build("tc", TCConfig, {**v["tc"], **shape, "scale_grid": grid, "morlet": morlet})
    sr = _build("sr", SRConfig, {**v["sr"], "length": data.signal_length})
    loss = _build("loss", LossConfig, v["loss"])
    ablation = _build("ablation", Ablation, v["ablation"])
    train = _build("train", TrainConfig, {**v["train"], "ablation": ablation, "sr_segments": sr.segments})
    output = _build("output", OutputConfig, v["output"])
    return RunConfig(data, ct, tc, sr, loss, train, output)


def load_config(path: Optional[Path] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read ``path`` (if given), apply ``key=value`` overrides, and validate everything."""
    raw: Dict[Tuple[str, str], str] = {}
    base = None
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        raw.update(parse_lines(text.splitlines(), str(path)))
        base = path.parent
    for (section, name), value in parse_lines(overrides, "--set").items():
        if (section, name) in _PATH_KEYS and base is not None:
            value = str(Path(value).absolute())  # overrides resolve against the working directory
        raw[(section, name)] = value
    return build_config(raw, base)


def with_ablation(cfg: RunConfig, ablation: Ablation) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, ablation=ablation))
