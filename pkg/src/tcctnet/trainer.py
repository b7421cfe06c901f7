"""Adam, learning-rate milestones, early stopping and the augmented training loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .augment import sr_augment_arrays
from .checkpoint import save_checkpoint
from .dataio import Dataset
from .fusion import LossConfig, combined_loss, predict
from .model import Ablation, TCCTNet
from .tensor import DiffTensor

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "train_acc", "val_acc", "lr", "seconds")

Arrays = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0005
    beta1: float = 0.6
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 72
    scheduler: Tuple[Tuple[int, float], ...] = ((50, 0.5), (100, 0.5))
    early_stop_patience: int = 20
    max_epochs: int = 200
    seed: int = 0
    ablation: Ablation = Ablation()
    sr_segments: int = 4

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.adam_epsilon > 0:
            raise ValueError(f"adam_epsilon must be positive, got {self.adam_epsilon}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.early_stop_patience < 1:
            raise ValueError(f"early_stop_patience must be >= 1, got {self.early_stop_patience}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.sr_segments < 1:
            raise ValueError(f"sr_segments must be >= 1, got {self.sr_segments}")
        for epoch, mult in self.scheduler:
            if epoch < 1 or not mult > 0:
                raise ValueError(f"scheduler milestone ({epoch}, {mult}) needs epoch >= 1 and a positive multiplier")

    def lr_at(self, epoch: int) -> float:
        """Learning rate used during 1-indexed ``epoch``; a milestone takes effect after its epoch."""
        lr = self.learning_rate
        for m, mult in self.scheduler:
            if epoch > m:
                lr *= mult
        return lr


class ModelState:
    """Model parameters under optimization plus Adam moment accumulators."""

    def __init__(self, model: TCCTNet, parameters: Optional[Dict[str, DiffTensor]] = None):
        self.model = model
        if parameters is None:
            active = {id(p) for p in model.active_parameters()}
            parameters = {n: p for n, p in model.named_parameters() if id(p) in active}
        self.parameters = dict(parameters)
        self.m = {n: np.zeros(p.shape) for n, p in self.parameters.items()}
        self.v = {n: np.zeros(p.shape) for n, p in self.parameters.items()}
        self.step = 0


def adam_step(state: ModelState, gradients: Optional[Dict[str, np.ndarray]], config: TrainConfig,
              lr: Optional[float] = None) -> ModelState:
    """One bias-corrected Adam update in place; ``gradients`` defaults to each parameter's ``.grad``."""
    lr = config.learning_rate if lr is None else lr
    grads = {}
    for name, p in state.parameters.items():
        g = p.grad if gradients is None else gradients.get(name)
        if g is None:
            raise ValueError(f"missing gradient for parameter {name!r}")
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient for {name!r} has shape {np.shape(g)}, parameter {p.shape}")
        grads[name] = g
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in state.parameters.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + config.adam_epsilon)
        p.values[...] = (p.values - update).astype(p.dtype)
    return state


class EarlyStopping:
    """Track the best validation metric; signal a stop after ``patience`` epochs without improvement."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0

    def update(self, epoch: int, metric: float) -> bool:
        """Record ``metric`` for ``epoch``; return True if it is a new best (strictly greater)."""
        if metric > self.best:
            self.best = metric
            self.best_epoch = epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    lr: float
    seconds: float


@dataclass
class TrainReport:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = 0.0
    stopped_early: bool = False
    iteration_sizes: List[int] = field(default_factory=list)

    @property
    def train_loss(self) -> List[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def train_acc(self) -> List[float]:
        return [e.train_acc for e in self.epochs]

    @property
    def val_acc(self) -> List[float]:
        return [e.val_acc for e in self.epochs]

    @property
    def seconds(self) -> List[float]:
        return [e.seconds for e in self.epochs]


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows: true class, columns: predicted class

    def format(self, class_names: Optional[Sequence[str]] = None) -> str:
        k = self.confusion.shape[0]
        names = list(class_names) if class_names else [str(i) for i in range(k)]
        width = max(8, max(len(n) for n in names))
        lines = [f"accuracy: {100 * self.accuracy:.2f}%", "confusion (rows true, columns predicted):",
                 " " * width + "".join(f"{n:>{width + 1}}" for n in names)]
        for i, n in enumerate(names):
            lines.append(f"{n:>{width}}" + "".join(f"{c:>{width + 1}d}" for c in self.confusion[i]))
        return "\n".join(lines)


def _as_arrays(data: Union[Dataset, Arrays], dtype) -> Arrays:
    if isinstance(data, Dataset):
        return data.arrays(dtype)
    x, y = data
    return np.asarray(x, dtype=dtype), np.asarray(y, dtype=np.int64)


def confusion_matrix(labels: np.ndarray, predicted: np.ndarray, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, predicted), 1)
    return cm


def evaluate(data: Union[Dataset, Arrays], model: TCCTNet, ablation: Optional[Ablation] = None,
             scalograms: Optional[np.ndarray] = None, batch_size: int = 256) -> EvalResult:
    """Eval-mode accuracy and confusion matrix."""
    x, y = _as_arrays(data, model.dtype)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    previous = model.ablation
    if ablation is not None:
        model.ablation = ablation
    try:
        pred = predict(model.predict_proba(x, scalograms, batch_size))
    finally:
        model.ablation = previous
    k = model.ct_cfg.num_classes
    return EvalResult(float(np.mean(pred == y)), confusion_matrix(y, pred, k))


def write_metrics(path, records: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_acc), repr(r.lr),
                        f"{r.seconds:.3f}"])


def read_metrics(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _check_classes(y: np.ndarray, num_classes: int) -> None:
    counts = np.bincount(y, minlength=num_classes)
    for cls, c in enumerate(counts):
        if c == 0:
            log.warning("class %d has no training samples", cls)
        elif c == 1:
            log.warning("class %d has a single training sample; recombination only copies it", cls)


def assemble_batch(x: np.ndarray, y: np.ndarray, segments: int, rng: np.random.Generator, augment: bool = True,
                   scalograms: Optional[np.ndarray] = None, transform: Optional[Callable] = None):
    """The N originals followed by N recombined samples (2N total), or just the originals.

    ``scalograms`` of the originals are extended with ``transform`` of the
    synthetic signals when given.
    """
    if not augment:
        return x, y, scalograms
    xa = sr_augment_arrays(x, y, segments, rng)
    if scalograms is not None:
        scalograms = np.concatenate([scalograms, transform(xa)])
    return np.concatenate([x, xa]), np.concatenate([y, y]), scalograms


def train(train_data: Union[Dataset, Arrays], val_data: Union[Dataset, Arrays], model: TCCTNet,
          config: TrainConfig = TrainConfig(), loss_config: Optional[LossConfig] = None,
          metrics_path=None, checkpoint_path=None, checkpoint_meta: Optional[Dict] = None,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> Tuple[ModelState, TrainReport]:
    """Train ``model`` in place and return it restored to its best-validation weights."""
    loss_config = loss_config or LossConfig(num_classes=model.ct_cfg.num_classes, fusion_mode=model.fusion_mode)
    x_tr, y_tr = _as_arrays(train_data, model.dtype)
    x_va, y_va = _as_arrays(val_data, model.dtype)
    if len(y_tr) == 0 or len(y_va) == 0:
        raise ValueError("training and validation sets must be nonempty")
    for name, x in (("training", x_tr), ("validation", x_va)):
        if x.shape[1:] != (model.n_features, model.ct_cfg.signal_length):
            raise ValueError(f"{name} signals have shape {x.shape[1:]}, model expects "
                             f"({model.n_features}, {model.ct_cfg.signal_length})")
    _check_classes(y_tr, loss_config.num_classes)

    model.ablation = config.ablation
    model.reseed_dropout(config.seed)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[2])
    state = ModelState(model)
    augment = not config.ablation.no_augmentation
    use_tc = config.ablation.uses_tc
    sc_tr = model.scalograms(x_tr) if use_tc else None
    sc_va = model.scalograms(x_va) if use_tc else None

    stopper = EarlyStopping(config.early_stop_patience)
    report = TrainReport()
    best_state = model.state_dict()
    N = config.batch_size
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        lr = config.lr_at(epoch)
        model.train()
        order = rng.permutation(len(y_tr))
        loss_sum = 0.0
        seen = correct = 0
        for i in range(0, len(order), N):
            idx = order[i:i + N]
            xb, yb, sb = assemble_batch(x_tr[idx], y_tr[idx], config.sr_segments, rng, augment,
                                        sc_tr[idx] if use_tc else None, model.scalograms)
            report.iteration_sizes.append(len(yb))
            model.zero_grad()
            scores = model(xb, sb)
            loss = combined_loss(scores, yb, state.parameters.values(), loss_config)
            loss.backward()
            adam_step(state, None, config, lr)
            n_orig = len(idx)
            loss_sum += loss.item() * len(yb)
            seen += len(yb)
            correct += int(np.sum(predict(scores.values[:n_orig]) == yb[:n_orig]))
        train_acc = correct / len(y_tr)
        val = evaluate((x_va, y_va), model, scalograms=sc_va)
        if stopper.update(epoch, val.accuracy):
            best_state = model.state_dict()
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, model, {**(checkpoint_meta or {}), "epoch": epoch,
                                                         "val_acc": val.accuracy})
        record = EpochRecord(epoch, loss_sum / seen, train_acc, val.accuracy, lr, time.perf_counter() - start)
        report.epochs.append(record)
        if metrics_path is not None:
            write_metrics(metrics_path, report.epochs)
        if on_epoch is not None:
            on_epoch(record)
        log.info("epoch %d loss %.4f train %.3f val %.3f", epoch, record.train_loss, train_acc, val.accuracy)
        if stopper.should_stop(epoch):
            report.stopped_early = epoch < config.max_epochs
            break
    model.load_state_dict(best_state)
    report.best_epoch = stopper.best_epoch
    report.best_val_acc = stopper.best
    return state, report
