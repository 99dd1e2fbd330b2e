"""AdamW, EMA and the generic training step."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor

logger = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-4
    ema_decay: float = 0.999
    epochs: int = 100
    seed: int = 0
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    betas: tuple[float, float] = (0.9, 0.999)
    warmup_steps: int = 0

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch_size and epochs must be positive")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning rate and weight decay must be non-negative")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    ema: dict = field(default_factory=dict)

    @classmethod
    def create(cls, params: dict) -> OptimizerState:
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            step=0,
            ema={k: v.copy() for k, v in params.items()},
        )


def compute_gradients(params: dict, loss_fn: Callable[[dict], Tensor]) -> tuple[float, dict]:
    tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
    loss = loss_fn(tensors)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}
    return float(loss.data), grads


def adamw_update(params: dict, grads: dict, state: OptimizerState, cfg: TrainConfig) -> None:
    state.step += 1
    b1, b2 = cfg.betas
    lr = cfg.learning_rate
    if cfg.warmup_steps:
        lr *= min(1.0, state.step / cfg.warmup_steps)
    if cfg.grad_clip:
        norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
        if norm > cfg.grad_clip:
            scale = cfg.grad_clip / norm
            grads = {k: g * scale for k, g in grads.items()}
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for k, p in params.items():
        g = grads[k].astype(p.dtype, copy=False)
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + 1e-8) + cfg.weight_decay * p
        p -= (lr * update).astype(p.dtype, copy=False)


def ema_update(params: dict, state: OptimizerState, decay: float) -> None:
    for k, p in params.items():
        e = state.ema[k]
        e *= decay
        e += (1.0 - decay) * p


def train_step(
    params: dict,
    loss_fn: Callable[[dict], Tensor],
    state: OptimizerState,
    cfg: TrainConfig,
) -> float:
    """One AdamW step in place on ``params``; returns the pre-update loss."""
    loss, grads = compute_gradients(params, loss_fn)
    if not math.isfinite(loss):
        bad = sorted(k for k, g in grads.items() if not np.isfinite(g).all())
        raise TrainingDiverged(f"loss is {loss} at step {state.step}; non-finite grads in {bad[:5]}")
    adamw_update(params, grads, state, cfg)
    # warm-up keeps the average from dragging the random init through short runs
    ema_update(params, state, min(cfg.ema_decay, (1.0 + state.step) / (10.0 + state.step)))
    return loss


def gradient_check(
    params: dict,
    loss_fn: Callable[[dict], Tensor],
    h: float = 1e-4,
    entries_per_block: int = 6,
    seed: int = 0,
    floor: float = 1e-7,
) -> dict[str, float]:
    """Max relative error per parameter block, analytic vs central differences.

    Expects float64 parameters. Samples a few random entries per block plus the
    entry with the largest analytic gradient.
    """
    rng = np.random.default_rng(seed)
    _, grads = compute_gradients(params, loss_fn)
    errors = {}

    def value(p):
        return float(loss_fn({k: Tensor(v) for k, v in p.items()}).data)

    for name, arr in params.items():
        g = grads[name]
        flat = list(rng.choice(arr.size, size=min(entries_per_block, arr.size), replace=False))
        flat.append(int(np.argmax(np.abs(g))))
        worst = 0.0
        for idx in flat:
            pos = np.unravel_index(idx, arr.shape)
            orig = arr[pos]
            arr[pos] = orig + h
            up = value(params)
            arr[pos] = orig - h
            down = value(params)
            arr[pos] = orig
            numeric = (up - down) / (2 * h)
            analytic = float(g[pos])
            err = abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor)
            worst = max(worst, err)
        errors[name] = worst
    return errors
