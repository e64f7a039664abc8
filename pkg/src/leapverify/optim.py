"""AdamW with linear warmup + cosine decay, functional style.

The optimizer state is a value: apply_update returns a new state rather than
mutating, so snapshots taken at checkpoints stay valid while training
continues. Raw (not bias-corrected) moment EMAs are exposed for the momentum
weight predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import NonFiniteError, freeze, is_finite


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    eps: float = 1e-8
    warmup_steps: int = 100
    total_steps: int = 2000

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("lr and eps must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not (0 <= self.warmup_steps <= self.total_steps):
            raise ValueError("need 0 <= warmup_steps <= total_steps")


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int
    hyper: AdamHyper


def init_state(param_dim: int, hyper: AdamHyper) -> AdamState:
    return AdamState(
        m=freeze(np.zeros(param_dim)),
        v=freeze(np.zeros(param_dim)),
        step=0,
        hyper=hyper,
    )


def lr_at(hyper: AdamHyper, step: int) -> float:
    """Scheduled learning rate for the update taken at `step` (0-based).

    Linear ramp to hyper.lr over warmup_steps -- the first step already uses
    lr/warmup_steps so no update is a no-op -- then cosine decay to 0 at
    total_steps.
    """
    if not (0 <= step <= hyper.total_steps):
        raise ValueError(f"step {step} outside [0, {hyper.total_steps}]")
    if step < hyper.warmup_steps:
        return hyper.lr * (step + 1) / hyper.warmup_steps
    span = hyper.total_steps - hyper.warmup_steps
    if span == 0:
        return 0.0
    phase = math.pi * (step - hyper.warmup_steps) / span
    return hyper.lr * 0.5 * (1.0 + math.cos(phase))


def apply_update(state: AdamState, theta: np.ndarray, g: np.ndarray) -> tuple[AdamState, np.ndarray]:
    """One AdamW step: returns (new state, new theta). Inputs untouched.

    EMA recurrences with bias correction, decoupled weight decay at the
    scheduled learning rate. A non-finite gradient halts training here
    instead of silently poisoning the moments.
    """
    if g.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError("theta/gradient/moment length mismatch")
    if not is_finite(g):
        raise NonFiniteError("non-finite gradient; training halted")

    h = state.hyper
    t = state.step + 1
    m = h.beta1 * state.m + (1.0 - h.beta1) * g
    v = h.beta2 * state.v + (1.0 - h.beta2) * g * g
    m_hat = m / (1.0 - h.beta1**t)
    v_hat = v / (1.0 - h.beta2**t)
    lr = lr_at(h, state.step)
    new_theta = theta - lr * (m_hat / (np.sqrt(v_hat) + h.eps)) - lr * h.weight_decay * theta
    new_state = AdamState(m=freeze(m), v=freeze(v), step=t, hyper=h)
    return new_state, freeze(new_theta)


def snapshot_moments(state: AdamState) -> tuple[np.ndarray, np.ndarray]:
    """Immutable copies of the raw first/second moment EMAs."""
    return freeze(state.m.copy()), freeze(state.v.copy())


def fast_forward(state: AdamState, k: int, policy: str = "carry") -> AdamState:
    """Advance the optimizer clock by k skipped steps after an accepted leap.

    `carry` keeps the moments as-is; `decay` applies k rounds of the beta
    decay (as if k zero-gradient steps had occurred).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if policy == "carry":
        m, v = state.m, state.v
    elif policy == "decay":
        h = state.hyper
        m = freeze(state.m * h.beta1**k)
        v = freeze(state.v * h.beta2**k)
    else:
        raise ValueError(f"unknown fast-forward policy {policy!r}")
    return AdamState(m=m, v=v, step=state.step + k, hyper=state.hyper)
