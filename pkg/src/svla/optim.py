"""Adam optimizer with bias correction, plus global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OptimError(ValueError):
    pass


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """One Adam update, in place, over every entry of `params`.

    `params` maps name -> array (or Tensor); every entry must have a
    gradient in `grads`. Moment buffers are created lazily on first use.
    """
    if lr <= 0:
        raise OptimError(f"adam_step: lr must be positive, got {lr}")
    missing = [k for k in params if k not in grads]
    if missing:
        raise OptimError(f"adam_step: missing gradients for {sorted(missing)}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        arr = p if isinstance(p, np.ndarray) else p.data
        g = grads[name]
        if g.shape != arr.shape:
            raise OptimError(
                f"adam_step: gradient shape {g.shape} != parameter shape {arr.shape} for {name!r}"
            )
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        arr -= (lr * mhat / (np.sqrt(vhat) + state.epsilon)).astype(arr.dtype)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is <= max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
