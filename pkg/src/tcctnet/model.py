"""The two-stream network: CT stream, TC stream and learnable fusion weights."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .fusion import FUSION_MODES, fused_scores
from .stream_ct import CTConfig, CTStream
from .stream_tc import TCConfig, TCStream, tc_transform
from .tensor import DiffTensor, Module
from .tensor import functional as F
from .tensor.core import DEFAULT_DTYPE
from .wavelet import MorletParams, ScaleGrid, magnitudes


@dataclass(frozen=True)
class Ablation:
    ct_only: bool = False
    tc_only: bool = False
    no_attention: bool = False
    no_augmentation: bool = False

    def __post_init__(self):
        if self.ct_only and self.tc_only:
            raise ValueError("ct_only and tc_only are mutually exclusive")

    @property
    def uses_ct(self) -> bool:
        return not self.tc_only

    @property
    def uses_tc(self) -> bool:
        return not self.ct_only


class TCCTNet(Module):
    """Both streams plus the fusion weights ``w_ct`` and ``w_tc`` (initialised to 0.5)."""

    def __init__(self, ct_cfg: CTConfig, tc_cfg: TCConfig, seed: int = 0, dtype=DEFAULT_DTYPE,
                 ablation: Ablation = Ablation(), fusion_mode: str = "logits"):
        if (ct_cfg.n_features, ct_cfg.signal_length) != (tc_cfg.n_features, tc_cfg.signal_length):
            raise ValueError("CT and TC configurations disagree on feature count or signal length")
        if fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {fusion_mode!r}")
        init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(init_ss)
        self.drop_rng = np.random.default_rng(drop_ss)
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.ct_cfg = ct_cfg
        self.tc_cfg = tc_cfg
        self.fusion_mode = fusion_mode
        self.ct = CTStream(ct_cfg, rng, self.drop_rng, dtype)
        self.tc = TCStream(tc_cfg, rng, self.drop_rng, dtype)
        self.w_ct = DiffTensor(np.array([0.5], dtype=dtype), requires_grad=True)
        self.w_tc = DiffTensor(np.array([0.5], dtype=dtype), requires_grad=True)
        self.ablation = ablation

    @property
    def ablation(self) -> Ablation:
        return self._ablation

    @ablation.setter
    def ablation(self, value: Ablation) -> None:
        self._ablation = value
        self.ct.use_attention = not value.no_attention

    @property
    def n_features(self) -> int:
        return self.ct_cfg.n_features

    def reseed_dropout(self, seed: int) -> None:
        state = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1]).bit_generator.state
        self.drop_rng.bit_generator.state = state

    def active_parameters(self) -> List[DiffTensor]:
        """Parameters that influence the output under the current ablation."""
        skip = []
        if not self.ablation.uses_tc:
            skip.append("tc.")
        if not self.ablation.uses_ct:
            skip.append("ct.")
        if self.ablation.no_attention:
            skip.append("ct.blocks.")
        return [p for name, p in self.named_parameters() if not name.startswith(tuple(skip))]

    # -- inputs -----------------------------------------------------------
    def scalograms(self, signals: np.ndarray) -> np.ndarray:
        return magnitudes(signals, self.tc_cfg.scale_grid, self.tc_cfg.morlet).astype(self.dtype)

    def stream_logits(self, signals: np.ndarray, scalograms: Optional[np.ndarray] = None
                      ) -> Tuple[Optional[DiffTensor], Optional[DiffTensor]]:
        signals = np.asarray(signals)
        ct = tc = None
        if self.ablation.uses_ct:
            x = DiffTensor(signals[:, None, :, :].astype(self.dtype))
            ct = self.ct(x)
        if self.ablation.uses_tc:
            sc = scalograms if scalograms is not None else self.scalograms(signals)
            tc = self.tc(DiffTensor(np.asarray(sc, dtype=self.dtype)))
        return ct, tc

    def __call__(self, signals: np.ndarray, scalograms: Optional[np.ndarray] = None) -> DiffTensor:
        """``(N, F, T)`` signals → fused pre-softmax scores ``(N, num_classes)``."""
        ct, tc = self.stream_logits(signals, scalograms)
        return fused_scores(ct, tc, self.w_ct, self.w_tc, self.fusion_mode)

    def predict_proba(self, signals: np.ndarray, scalograms: Optional[np.ndarray] = None,
                      batch_size: int = 256) -> np.ndarray:
        """Eval-mode fused class probabilities; restores the previous mode."""
        was_training = self.training
        self.eval()
        try:
            out = []
            for i in range(0, len(signals), batch_size):
                sc = None if scalograms is None else scalograms[i:i + batch_size]
                out.append(F.softmax(self(signals[i:i + batch_size], sc), axis=-1).values)
        finally:
            self.train(was_training)
        if not out:
            return np.zeros((0, self.ct_cfg.num_classes), dtype=self.dtype)
        return np.concatenate(out)

    # -- serialization of the architecture --------------------------------
    def config_dict(self) -> Dict:
        tc = asdict(self.tc_cfg)
        tc["scale_grid"] = {"scales": list(self.tc_cfg.scale_grid.scales),
                            "sampling_rate": self.tc_cfg.scale_grid.sampling_rate}
        tc["morlet"] = asdict(self.tc_cfg.morlet)
        return {
            "ct": asdict(self.ct_cfg),
            "tc": tc,
            "seed": self.seed,
            "dtype": self.dtype.name,
            "ablation": asdict(self.ablation),
            "fusion_mode": self.fusion_mode,
        }

    @classmethod
    def from_config_dict(cls, d: Dict) -> "TCCTNet":
        tc = dict(d["tc"])
        grid = tc.pop("scale_grid")
        tc["scale_grid"] = ScaleGrid(tuple(grid["scales"]), grid["sampling_rate"])
        tc["morlet"] = MorletParams(**tc.pop("morlet"))
        return cls(CTConfig(**d["ct"]), TCConfig(**tc), seed=d.get("seed", 0),
                   dtype=np.dtype(d.get("dtype", "float32")), ablation=Ablation(**d.get("ablation", {})),
                   fusion_mode=d.get("fusion_mode", "logits"))


def build_model(n_features: int = 2, signal_length: int = 280, seed: int = 0, dtype=DEFAULT_DTYPE,
                ablation: Ablation = Ablation(), fusion_mode: str = "logits",
                ct: Optional[CTConfig] = None, tc: Optional[TCConfig] = None) -> TCCTNet:
    ct = replace(ct or CTConfig(), n_features=n_features, signal_length=signal_length)
    tc = replace(tc or TCConfig(), n_features=n_features, signal_length=signal_length)
    return TCCTNet(ct, tc, seed, dtype, ablation, fusion_mode)


__all__ = ["Ablation", "TCCTNet", "build_model", "tc_transform"]
