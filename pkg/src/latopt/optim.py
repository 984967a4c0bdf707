"""Optimizers and schedules: bias-corrected Adam, the cosine learning-rate
schedule, and a generic first-order meta-update over K task losses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter.

    One state covers all parameter groups of a model; accumulators are
    created lazily and mirror each parameter's shape.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def state_scalars(self) -> int:
        return sum(a.size for a in self.m.values()) + sum(a.size for a in self.v.values())


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
    """One in-place Adam update on every tensor present in ``grads``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != param shape {p.shape} for '{name}'")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def cosine_lr(t: int, total: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi * t / total)); lr0 at t=0, 0 at t=total."""
    if t > total:
        raise ValueError(f"cosine_lr: step {t} past the end of the schedule ({total})")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / total))


def maml_meta_update(params: dict[str, np.ndarray], task_grad_fns, gamma: float, eta: float) -> dict[str, np.ndarray]:
    """First-order meta-update over K tasks.

    Each entry of ``task_grad_fns`` maps a parameter dict to its gradient
    dict. Per task, parameters take a one-step lookahead w - gamma*g(w); the
    meta gradient is evaluated at the lookahead point and the average is
    applied to the original parameters.
    """
    if len(task_grad_fns) == 0:
        raise ValueError("maml_meta_update: need at least one task")
    if gamma < 0:
        raise ValueError("maml_meta_update: gamma must be >= 0")
    meta = {k: np.zeros_like(v) for k, v in params.items()}
    for grad_fn in task_grad_fns:
        g_inner = grad_fn(params)
        lookahead = {k: params[k] - gamma * g_inner[k] for k in params}
        g_outer = grad_fn(lookahead)
        for k in meta:
            meta[k] += g_outer[k]
    k_tasks = len(task_grad_fns)
    return {k: params[k] - eta * meta[k] / k_tasks for k in params}
