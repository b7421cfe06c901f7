"""Decision-level fusion of the two streams and the combined training objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .tensor import DiffTensor, ShapeError
from .tensor import functional as F

FUSION_MODES = ("logits", "probabilities")


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.01
    num_classes: int = 4
    fusion_mode: str = "logits"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")


def fused_scores(logits_ct: Optional[DiffTensor], logits_tc: Optional[DiffTensor],
                 w_ct: DiffTensor, w_tc: DiffTensor, mode: str = "logits") -> DiffTensor:
    """Pre-softmax fused scores; a stream passed as ``None`` is left out.

    ``logits`` mode: ``w_ct*ct + w_tc*tc``. ``probabilities`` mode: the log of
    the weighted sum of per-stream softmax outputs (weights should stay
    positive in this mode).
    """
    if logits_ct is None and logits_tc is None:
        raise ValueError("at least one stream is required")
    if logits_ct is not None and logits_tc is not None and logits_ct.shape != logits_tc.shape:
        raise ShapeError(f"stream outputs differ: {logits_ct.shape} vs {logits_tc.shape}")
    terms = []
    for logits, w in ((logits_ct, w_ct), (logits_tc, w_tc)):
        if logits is None:
            continue
        terms.append(w * (logits if mode == "logits" else F.softmax(logits, axis=-1)))
    total = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    return total if mode == "logits" else total.log()


def fuse(logits_ct, logits_tc, w_ct: DiffTensor, w_tc: DiffTensor, mode: str = "logits") -> DiffTensor:
    """Fused class probabilities, one distribution per row."""
    return F.softmax(fused_scores(logits_ct, logits_tc, w_ct, w_tc, mode), axis=-1)


def _check_labels(labels, n: int, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in 0..{num_classes - 1}")
    return labels


def cross_entropy(scores: DiffTensor, labels, from_logits: bool = True) -> DiffTensor:
    """Mean negative log-likelihood of ``labels``.

    With ``from_logits`` the scores are pre-softmax and the log-sum-exp form is
    used; otherwise they are probabilities.
    """
    labels = _check_labels(labels, scores.shape[0], scores.shape[1])
    logp = F.log_softmax(scores, axis=-1) if from_logits else scores.log()
    return -F.pick(logp, labels).mean()


def l2_penalty(parameters: Iterable[DiffTensor]) -> DiffTensor:
    terms = [(p * p).sum() for p in parameters]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def combined_loss(scores: DiffTensor, labels, parameters: Iterable[DiffTensor],
                  config: LossConfig = LossConfig(), from_logits: bool = True) -> DiffTensor:
    """Cross-entropy plus ``(lam / N_b) * ||theta||^2`` over ``parameters``."""
    labels = _check_labels(labels, scores.shape[0], config.num_classes)
    ce = cross_entropy(scores, labels, from_logits)
    params = list(parameters)
    if config.lam == 0 or not params:
        return ce
    return ce + l2_penalty(params) * (config.lam / scores.shape[0])


def predict(probs) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    values = probs.values if isinstance(probs, DiffTensor) else np.asarray(probs)
    return np.argmax(values, axis=-1)
