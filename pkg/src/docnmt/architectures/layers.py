"""Parameter factories and functional Transformer building blocks.

Blocks read their weights from a flat ``name -> Parameter`` dict using a name
prefix, so encoders of different networks can share the same code.
"""

from __future__ import annotations

import math

import numpy as np

from .. import numkernel as nk
from ..numkernel import Parameter, Tensor


class ParamFactory:
    def __init__(self, params: dict[str, Parameter], rng: np.random.Generator):
        self.params = params
        self.rng = rng

    def _add(self, name: str, data) -> Parameter:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(data, name)
        self.params[name] = p
        return p

    def xavier(self, name: str, fan_in: int, fan_out: int) -> Parameter:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return self._add(name, self.rng.uniform(-limit, limit, size=(fan_in, fan_out)))

    def fresh(self, name: str, shape: tuple[int, ...], d: int) -> Parameter:
        """Initialisation for parameters new to a context model: U(-1/sqrt(d), 1/sqrt(d))."""
        limit = 1.0 / math.sqrt(d)
        return self._add(name, self.rng.uniform(-limit, limit, size=shape))

    def const(self, name: str, data) -> Parameter:
        return self._add(name, np.asarray(data))

    def normal(self, name: str, shape: tuple[int, ...], std: float) -> Parameter:
        return self._add(name, self.rng.normal(0.0, std, size=shape))


def init_attention(f: ParamFactory, prefix: str, d: int, fresh: bool = False) -> None:
    for w in ("q", "k", "v", "o"):
        if fresh:
            f.fresh(f"{prefix}.w{w}", (d, d), d)
        else:
            f.xavier(f"{prefix}.w{w}", d, d)
        f.const(f"{prefix}.b{w}", np.zeros(d))


def init_layer_norm(f: ParamFactory, prefix: str, d: int) -> None:
    f.const(f"{prefix}.g", np.ones(d))
    f.const(f"{prefix}.b", np.zeros(d))


def init_ffn(f: ParamFactory, prefix: str, d: int, d_ff: int) -> None:
    f.xavier(f"{prefix}.w1", d, d_ff)
    f.const(f"{prefix}.b1", np.zeros(d_ff))
    f.xavier(f"{prefix}.w2", d_ff, d)
    f.const(f"{prefix}.b2", np.zeros(d))


def init_gate(f: ParamFactory, prefix: str, d: int) -> None:
    f.fresh(f"{prefix}.W_g", (2 * d, d), d)
    # Bias +2 starts the gate near the source path (sigmoid(2) ~ 0.88).
    f.const(f"{prefix}.b_g", np.full(d, 2.0))
    # Identity source transform: a saturated gate reproduces the sentence-level path.
    f.const(f"{prefix}.W_s", np.eye(d))
    f.fresh(f"{prefix}.W_c", (d, d), d)


def init_encoder_layer(f: ParamFactory, prefix: str, d: int, d_ff: int) -> None:
    init_attention(f, f"{prefix}.self", d)
    init_layer_norm(f, f"{prefix}.ln1", d)
    init_ffn(f, f"{prefix}.ff", d, d_ff)
    init_layer_norm(f, f"{prefix}.ln2", d)


def init_decoder_layer(f: ParamFactory, prefix: str, d: int, d_ff: int) -> None:
    init_attention(f, f"{prefix}.self", d)
    init_layer_norm(f, f"{prefix}.ln1", d)
    init_attention(f, f"{prefix}.cross", d)
    init_layer_norm(f, f"{prefix}.ln2", d)
    init_ffn(f, f"{prefix}.ff", d, d_ff)
    init_layer_norm(f, f"{prefix}.ln3", d)


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = nk.matmul(x, w)
    return y if b is None else nk.add(y, b)


def layer_norm(p: dict, prefix: str, x: Tensor) -> Tensor:
    return nk.layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"])


def ffn(p: dict, prefix: str, x: Tensor) -> Tensor:
    h = nk.relu(linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
    return linear(h, p[f"{prefix}.w2"], p[f"{prefix}.b2"])


def multi_head_attention(
    p: dict,
    prefix: str,
    xq: Tensor,
    xkv: Tensor,
    mask: np.ndarray | None,
    n_heads: int,
    weights_out: list | None = None,
) -> Tensor:
    """Project, split heads, attend, merge heads. ``mask`` broadcasts to [B, 1|h, Tq, Tk]."""
    b, tq, d = xq.shape
    tk = xkv.shape[1]
    dh = d // n_heads

    def heads(x, t, w):
        y = linear(x, p[f"{prefix}.w{w}"], p[f"{prefix}.b{w}"])
        return nk.transpose(nk.reshape(y, (b, t, n_heads, dh)), (0, 2, 1, 3))

    q, k, v = heads(xq, tq, "q"), heads(xkv, tk, "k"), heads(xkv, tk, "v")
    out, weights = nk.scaled_dot_attention(q, k, v, mask, return_weights=True)
    if weights_out is not None:
        weights_out.append(weights.data)
    merged = nk.reshape(nk.transpose(out, (0, 2, 1, 3)), (b, tq, d))
    return linear(merged, p[f"{prefix}.wo"], p[f"{prefix}.bo"])


def gate_combine(h: Tensor, c: Tensor, p: dict, prefix: str) -> Tensor:
    """g = sigmoid(W_g [h; c] + b_g); out = g * (W_s h) + (1 - g) * (W_c c), elementwise."""
    if h.shape != c.shape:
        raise nk.DimensionError(f"gate inputs differ in shape: {h.shape} vs {c.shape}")
    g = nk.sigmoid(linear(nk.concat([h, c], axis=-1), p[f"{prefix}.W_g"], p[f"{prefix}.b_g"]))
    src = nk.matmul(h, p[f"{prefix}.W_s"])
    ctx = nk.matmul(c, p[f"{prefix}.W_c"])
    return nk.add(nk.mul(g, src), nk.mul(nk.sub(1.0, g), ctx))


def gate_values(h: np.ndarray, c: np.ndarray, p: dict, prefix: str) -> np.ndarray:
    z = np.concatenate([h, c], axis=-1) @ p[f"{prefix}.W_g"].data + p[f"{prefix}.b_g"].data
    return 1.0 / (1.0 + np.exp(-z))


def encoder_layer(p: dict, prefix: str, x: Tensor, mask: np.ndarray, n_heads: int, fuse=None) -> Tensor:
    """Post-norm encoder layer; ``fuse(x, self_out)`` may replace the self-attention output."""
    a = multi_head_attention(p, f"{prefix}.self", x, x, mask, n_heads)
    if fuse is not None:
        a = fuse(x, a)
    x = layer_norm(p, f"{prefix}.ln1", nk.add(x, a))
    return layer_norm(p, f"{prefix}.ln2", nk.add(x, ffn(p, f"{prefix}.ff", x)))


def key_mask(ids: np.ndarray, pad_id: int) -> np.ndarray:
    """[B, T] ids -> [B, 1, 1, T] boolean mask of attendable keys."""
    return (ids != pad_id)[:, None, None, :]


def causal_mask(ids: np.ndarray, pad_id: int) -> np.ndarray:
    t = ids.shape[1]
    tri = np.tril(np.ones((t, t), dtype=bool))
    return tri[None, None, :, :] & key_mask(ids, pad_id)
