"""Adam with bias correction and the inverse-square-root warmup schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..numkernel import Parameter


class NonFiniteGradient(FloatingPointError):
    pass


def noam_lr(step: int, warmup: int, d_model: int, scale: float = 1.0) -> float:
    """scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5)."""
    if step < 1:
        raise ValueError("learning-rate schedule is defined for step >= 1")
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    return scale * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, params: Sequence[Parameter], beta1=0.9, beta2=0.98, eps=1e-9) -> "AdamState":
        st = cls(beta1, beta2, eps)
        for p in params:
            st.m[p.name] = np.zeros_like(p.data)
            st.v[p.name] = np.zeros_like(p.data)
        return st


def adam_step(params: Sequence[Parameter], state: AdamState, lr: float, check: bool = True) -> None:
    """One bias-corrected Adam update from ``Parameter.grad``; gradients are zeroed after."""
    if check:
        for p in params:
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(f"non-finite gradient in parameter {p.name}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        g = p.grad
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - update).astype(p.data.dtype, copy=False)
        p.zero_grad()
