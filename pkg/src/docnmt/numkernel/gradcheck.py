"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import ContractViolation, Parameter, Tape, Tensor

# Entries whose gradients are both below this are compared in absolute terms.
REL_ERR_FLOOR = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_ERR_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    epsilon: float = 1e-5,
    max_entries_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Return the max relative error between tape and finite-difference gradients.

    Parameters with more than ``max_entries_per_param`` scalars are checked on a
    random subsample of their entries.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    base = loss.item()
    again = loss_fn().item()
    if base != again:
        raise ContractViolation(f"loss_fn is not deterministic: {base!r} != {again!r}")
    tape.backward(loss)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries_per_param is not None and n > max_entries_per_param:
            idx = rng.choice(n, size=max_entries_per_param, replace=False)
        else:
            idx = np.arange(n)
        analytic = p.grad.reshape(-1)[idx]
        numeric = np.empty(len(idx), dtype=np.float64)
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn().item()
            flat[i] = orig - epsilon
            down = loss_fn().item()
            flat[i] = orig
            numeric[k] = (up - down) / (2.0 * epsilon)
        if len(idx):
            worst = max(worst, float(relative_error(analytic, numeric).max()))
        p.zero_grad()
    return worst
