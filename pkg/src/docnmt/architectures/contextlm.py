"""Small masked-LM Transformer encoder used as the pretrained context model."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .. import numkernel as nk
from ..corpus import BREAK_ID, MASK_ID, PAD_ID, RESERVED_TOKENS, Document, TextCodec
from ..numkernel import Parameter, Tape, Tensor
from .layers import ParamFactory, encoder_layer, init_encoder_layer, key_mask, linear, sinusoidal_positions

log = logging.getLogger(__name__)


class VocabMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ContextLMConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 32
    d_ff: int = 64
    n_heads: int = 4
    max_positions: int = 128
    mask_prob: float = 0.15
    max_steps: int = 3000
    batch_size: int = 32
    lr: float = 3e-3
    accuracy_floor: float = 0.9
    eval_every: int = 100
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ContextLMConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class ContextLM:
    """Encoder producing hidden states H_B; frozen while the NMT model trains."""

    def __init__(self, config: ContextLMConfig, seed: int | None = None):
        self.config = config
        self.params: dict[str, Parameter] = {}
        self.held_out_accuracy: float | None = None
        c = config
        f = ParamFactory(self.params, np.random.default_rng(c.seed if seed is None else seed))
        f.normal("embed", (c.vocab_size, c.d_model), c.d_model ** -0.5)
        for i in range(c.n_layers):
            init_encoder_layer(f, f"layer.{i}", c.d_model, c.d_ff)
        f.xavier("mlm.w", c.d_model, c.vocab_size)
        f.const("mlm.b", np.zeros(c.vocab_size))
        self._pe = sinusoidal_positions(c.max_positions, c.d_model)

    def hidden(self, ids: np.ndarray) -> Tensor:
        c = self.config
        ids = np.asarray(ids)
        if ids.shape[1] > c.max_positions:
            ids = ids[:, -c.max_positions:]
        x = nk.scale(nk.embedding_lookup(self.params["embed"], ids), math.sqrt(c.d_model))
        x = nk.add(x, Tensor(self._pe[: ids.shape[1]]))
        mask = key_mask(ids, PAD_ID)
        for i in range(c.n_layers):
            x = encoder_layer(self.params, f"layer.{i}", x, mask, c.n_heads)
        return x

    def mlm_logits(self, ids: np.ndarray) -> Tensor:
        return linear(self.hidden(ids), self.params["mlm.w"], self.params["mlm.b"])

    def hidden_states(self, token_ids: Sequence[int]) -> np.ndarray:
        """[n, d] states for one sequence, computed without recording."""
        with nk.no_tape():
            return self.hidden(np.asarray([list(token_ids)], dtype=np.int64)).data[0]

    def batch_hidden(self, ids: np.ndarray) -> np.ndarray:
        with nk.no_tape():
            return self.hidden(ids).data


def _pad(seqs: Sequence[Sequence[int]]) -> np.ndarray:
    t = max(len(s) for s in seqs)
    out = np.full((len(seqs), t), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


def mask_tokens(batch: np.ndarray, prob: float, rng: np.random.Generator):
    """Select ``prob`` of the real tokens (at least one per row) and replace them by MASK."""
    real = batch >= len(RESERVED_TOKENS)
    chosen = (rng.random(batch.shape) < prob) & real
    for r in range(batch.shape[0]):
        if not chosen[r].any() and real[r].any():
            chosen[r, rng.choice(np.flatnonzero(real[r]))] = True
    inputs = np.where(chosen, MASK_ID, batch)
    targets = np.where(chosen, batch, PAD_ID)
    return inputs, targets


def masked_accuracy(model: ContextLM, seqs: Sequence[Sequence[int]], rng: np.random.Generator) -> float:
    hits = total = 0
    for start in range(0, len(seqs), 64):
        batch = _pad(seqs[start:start + 64])
        inputs, targets = mask_tokens(batch, model.config.mask_prob, rng)
        with nk.no_tape():
            pred = model.mlm_logits(inputs).data.argmax(-1)
        sel = targets != PAD_ID
        hits += int((pred[sel] == targets[sel]).sum())
        total += int(sel.sum())
    return hits / max(total, 1)


def lm_sequences(docs: Sequence[Document], codec: TextCodec) -> list[list[int]]:
    """Single sentences plus 'previous BREAK current' pairs, as the LM is queried."""
    seqs = []
    for d in docs:
        enc = [codec.encode(s) for s in d.sentences]
        for i, s in enumerate(enc):
            if s:
                seqs.append(list(s))
            if i and s and enc[i - 1]:
                seqs.append(list(enc[i - 1]) + [BREAK_ID] + list(s))
    return seqs


def pretrain_context_lm(
    mono_docs: Sequence[Document], codec: TextCodec, config: ContextLMConfig
) -> ContextLM:
    """Masked-token pretraining until held-out accuracy reaches the configured floor."""
    from ..training.optim import AdamState, adam_step

    if config.vocab_size != len(codec.vocab):
        raise VocabMismatch(
            f"context LM vocab size {config.vocab_size} != NMT vocab size {len(codec.vocab)}"
        )
    seqs = lm_sequences(mono_docs, codec)
    if len(seqs) < 2:
        raise ValueError("context LM pretraining needs monolingual documents")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(seqs))
    n_dev = max(1, len(seqs) // 10)
    dev = [seqs[i] for i in order[:n_dev]]
    train = [seqs[i] for i in order[n_dev:]]

    model = ContextLM(config)
    params = list(model.params.values())
    state = AdamState.create(params)
    for step in range(1, config.max_steps + 1):
        idx = rng.integers(0, len(train), size=config.batch_size)
        inputs, targets = mask_tokens(_pad([train[i] for i in idx]), config.mask_prob, rng)
        with Tape() as tape:
            loss = nk.cross_entropy(model.mlm_logits(inputs), targets, PAD_ID)
        tape.backward(loss)
        adam_step(params, state, config.lr)
        if step % config.eval_every == 0 or step == config.max_steps:
            acc = masked_accuracy(model, dev, np.random.default_rng([config.seed, step]))
            model.held_out_accuracy = acc
            log.info("ctxlm step %d loss %.4f masked-acc %.3f", step, loss.item(), acc)
            if acc >= config.accuracy_floor:
                break
    return model
