"""AdamW with decoupled weight decay, plus the linear LR schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor


@dataclass
class OptState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    base_lr: float = 5e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_opt_state(params: Dict[str, Tensor], base_lr: float = 5e-5,
                   weight_decay: float = 0.01, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> OptState:
    return OptState(
        m={name: np.zeros_like(t.data) for name, t in params.items()},
        v={name: np.zeros_like(t.data) for name, t in params.items()},
        base_lr=base_lr, weight_decay=weight_decay,
        beta1=beta1, beta2=beta2, eps=eps,
    )


def adamw_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray],
               opt: OptState, lr_t: float) -> None:
    """One in-place AdamW update at learning rate lr_t.

    Weight decay is decoupled: w <- w * (1 - lr_t * wd) before the
    bias-corrected moment update.
    """
    opt.step += 1
    t = opt.step
    bc1 = 1.0 - opt.beta1 ** t
    bc2 = 1.0 - opt.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeMismatch(
                f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
        if opt.weight_decay != 0.0:
            p.data *= 1.0 - lr_t * opt.weight_decay
        m = opt.m[name]
        v = opt.v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        p.data -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)


def linear_decay_lr(step: int, total_steps: int, base_lr: float) -> float:
    """base_lr * (1 - step/total_steps), floored at zero."""
    if total_steps <= 0:
        return 0.0
    return max(0.0, base_lr * (1.0 - step / total_steps))
