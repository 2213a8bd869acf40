"""SGD with momentum and decoupled-from-nothing classic weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Param


class DivergenceError(RuntimeError):
    """A gradient or parameter went non-finite during training."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0001
    rois_per_image: int = 64          # 512 when the pyramid stage is on
    anchors_per_image: int = 64
    positive_fraction: float = 0.25   # 1:3 positive to negative
    epochs: int = 12
    rng_seed: int = 0

    def __post_init__(self):
        if self.rois_per_image not in (64, 512):
            raise ValueError("rois_per_image must be 64 (backbone) or 512 (pyramid)")
        if not 0 < self.positive_fraction <= 0.5:
            raise ValueError("positive_fraction out of range")


@dataclass
class SgdState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_step(params: list[Param], cfg: TrainConfig, state: SgdState) -> None:
    """v <- momentum*v + grad + decay*param; param <- param - lr*v."""
    for p in params:
        if not np.isfinite(p.grad).all():
            raise DivergenceError(f"non-finite gradient in {p.name}")
        v = state.velocity.get(p.name)
        if v is None:
            v = np.zeros_like(p.value)
        v = cfg.momentum * v + p.grad + cfg.weight_decay * p.value
        state.velocity[p.name] = v
        p.value -= cfg.learning_rate * v
        if not np.isfinite(p.value).all():
            raise DivergenceError(f"non-finite parameter {p.name} after update")
