"""Encoder-decoder Transformer with every context-integration variant."""

from __future__ import annotations

import contextlib
import logging
import math
import zlib
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .. import numkernel as nk
from ..corpus import BOS_ID, BREAK_ID, DOCSTART_ID, EOS_ID, PAD_ID, ContextSample
from ..numkernel import ContractViolation, Parameter, Tensor
from .config import CONTEXT_ENCODER_VARIANTS, DECODER_GATED_VARIANTS, ConfigError, ModelConfig
from .contextlm import ContextLM, VocabMismatch
from .layers import (
    ParamFactory,
    causal_mask,
    encoder_layer,
    ffn,
    gate_combine,
    init_attention,
    init_decoder_layer,
    init_encoder_layer,
    init_gate,
    key_mask,
    layer_norm,
    linear,
    multi_head_attention,
    sinusoidal_positions,
)

log = logging.getLogger(__name__)

RANDOM_VEC_RANGE = 0.1


def random_vec_context(seed: int, d: int) -> np.ndarray:
    """d values i.i.d. uniform on [-0.1, 0.1], reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-RANDOM_VEC_RANGE, RANDOM_VEC_RANGE, size=d)


@dataclass(frozen=True)
class ContextInjection:
    vector: np.ndarray
    axis: str


def single_vec_context(ctxlm: ContextLM, context_tokens: Sequence[int], axis: str = "T") -> ContextInjection:
    """Mean-pool the context LM states of the context into one vector."""
    if not len(context_tokens):
        raise ContractViolation("single-vector context needs at least one context token")
    if axis not in ("T", "F"):
        raise ValueError(f"axis must be 'T' or 'F', got {axis!r}")
    states = ctxlm.hidden_states(context_tokens)
    return ContextInjection(states.mean(axis=0), axis)


@dataclass
class Batch:
    samples: list
    src: np.ndarray
    src_mask: np.ndarray  # [B, Ts'] keys, including a pseudo-token column for T-axis
    tgt_in: np.ndarray | None
    tgt_out: np.ndarray | None
    ctx: np.ndarray | None = None
    vec: np.ndarray | None = None
    hb: np.ndarray | None = None
    hb_mask: np.ndarray | None = None

    @property
    def n_target_tokens(self) -> int:
        return 0 if self.tgt_out is None else int((self.tgt_out != PAD_ID).sum())


@dataclass
class Memory:
    """Encoder-side states consumed by the decoder."""

    src: Tensor
    src_mask: np.ndarray
    ctx: Tensor | None = None
    ctx_mask: np.ndarray | None = None
    hb: Tensor | None = None
    hb_mask: np.ndarray | None = None

    def repeat(self, n: int) -> "Memory":
        """Tile a single-item memory ``n`` times along the batch (for beam search)."""

        def rep_t(t):
            return None if t is None else Tensor(np.repeat(t.data, n, axis=0))

        def rep_a(a):
            return None if a is None else np.repeat(a, n, axis=0)

        return Memory(
            rep_t(self.src), rep_a(self.src_mask), rep_t(self.ctx), rep_a(self.ctx_mask),
            rep_t(self.hb), rep_a(self.hb_mask),
        )


def pad_ids(seqs: Sequence[Sequence[int]], min_len: int = 1) -> np.ndarray:
    t = max([min_len] + [len(s) for s in seqs])
    out = np.full((len(seqs), t), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


class DocTransformer:
    def __init__(self, config: ModelConfig, ctxlm: ContextLM | None = None, seed: int = 0):
        self.config = config
        c = config
        if c.needs_ctxlm:
            if ctxlm is None:
                raise ConfigError(f"variant {c.label} needs a pretrained context LM")
            if ctxlm.config.vocab_size != c.vocab_size:
                raise VocabMismatch("context LM and NMT model use different vocabularies")
            if ctxlm.config.d_model != c.d_model:
                raise ConfigError("context LM width must equal d_model")
        self.ctxlm = ctxlm if c.needs_ctxlm else None
        self.params: dict[str, Parameter] = {}
        self._capture: list | None = None
        self.truncations = 0
        self._pe = sinusoidal_positions(c.max_positions + 1, c.d_model)
        self._build(np.random.default_rng(seed))

    # ------------------------------------------------------------------ params
    def _build(self, rng: np.random.Generator) -> None:
        c = self.config
        d = c.d_model
        f = ParamFactory(self.params, rng)
        std = d ** -0.5
        if c.share_embeddings:
            f.normal("embed.shared", (c.vocab_size, d), std)
        else:
            f.normal("embed.src", (c.vocab_size, d), std)
            f.normal("embed.tgt", (c.vocab_size, d), std)
            if c.variant in CONTEXT_ENCODER_VARIANTS or c.variant == "wordemb_in_par":
                f.normal("embed.ctx", (c.vocab_size, d), std)
        for i in range(c.n_layers):
            init_encoder_layer(f, f"enc.{i}", d, c.d_ff)
        for i in range(c.n_layers):
            init_decoder_layer(f, f"dec.{i}", d, c.d_ff)
        f.xavier("out.w", d, c.vocab_size)
        f.const("out.b", np.zeros(c.vocab_size))

        v = c.variant
        if v in CONTEXT_ENCODER_VARIANTS:
            for i in range(c.ctx_layers):
                init_encoder_layer(f, f"ctx_enc.{i}", d, c.d_ff)
        if v == "multi_out":
            init_attention(f, "enc_out.ctx_attn", d, fresh=True)
            init_gate(f, "enc_out.gate", d)
        if v in DECODER_GATED_VARIANTS:
            for i in range(c.n_layers):
                init_attention(f, f"dec.{i}.ctx_attn", d, fresh=True)
                init_gate(f, f"dec.{i}.gate", d)
        if v == "seq_emb":
            if "e" in c.seq_emb_where.split("&"):
                for i in range(c.n_layers):
                    init_attention(f, f"enc.{i}.bert_attn", d, fresh=True)
                    init_gate(f, f"enc.{i}.bert_gate", d)
            if "d" in c.seq_emb_where.split("&"):
                for i in range(c.n_layers):
                    init_attention(f, f"dec.{i}.bert_attn", d, fresh=True)
                    init_gate(f, f"dec.{i}.bert_gate", d)
        if v == "single_vec" and c.vec_axis == "F":
            w = np.zeros((2 * d, d))
            w[:d] = np.eye(d)
            w[d:] = rng.uniform(-1 / math.sqrt(d), 1 / math.sqrt(d), size=(d, d))
            f.const("vec_proj.w", w)

    @property
    def src_embedding(self) -> Parameter:
        return self.params["embed.shared" if self.config.share_embeddings else "embed.src"]

    @property
    def tgt_embedding(self) -> Parameter:
        return self.params["embed.shared" if self.config.share_embeddings else "embed.tgt"]

    @property
    def ctx_embedding(self) -> Parameter:
        if self.config.share_embeddings:
            return self.params["embed.shared"]
        return self.params.get("embed.ctx", self.params["embed.src"])

    def parameters(self) -> list[Parameter]:
        seen: dict[int, Parameter] = {}
        for p in self.params.values():
            seen.setdefault(id(p), p)
        return list(seen.values())

    def count_params(self) -> int:
        return count_params(self)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def gate_prefixes(self) -> list[str]:
        return sorted({n.rsplit(".", 1)[0] for n in self.params if n.endswith(".b_g")})

    def saturate_gates(self, toward: str = "source", magnitude: float = 30.0) -> None:
        """Drive every gate to ~1 (source path) or ~0 (context path).

        Toward the source path the F-axis projection also loses its context half.
        """
        sign = 1.0 if toward == "source" else -1.0
        for prefix in self.gate_prefixes():
            self.params[f"{prefix}.W_g"].assign(np.zeros_like(self.params[f"{prefix}.W_g"].data))
            self.params[f"{prefix}.b_g"].assign(np.full_like(self.params[f"{prefix}.b_g"].data, sign * magnitude))
        if "vec_proj.w" in self.params and toward == "source":
            # F-axis fusion: drop the context half of the projection
            w = self.params["vec_proj.w"].data.copy()
            w[self.config.d_model:] = 0.0
            self.params["vec_proj.w"].assign(w)

    @contextlib.contextmanager
    def capture_attention(self) -> Iterator[list]:
        """Collect every attention weight array computed inside the block."""
        self._capture = []
        try:
            yield self._capture
        finally:
            self._capture = None

    # ------------------------------------------------------------------ inputs
    def _warn_truncate(self, what: str, n: int, limit: int) -> None:
        self.truncations += 1
        log.warning("%s of length %d truncated to %d positions", what, n, limit)

    def source_ids(self, s: ContextSample) -> list[int]:
        c = self.config
        limit = c.max_positions - (1 if c.vec_axis == "T" else 0)
        cur = list(s.src_current) or [EOS_ID]
        if len(cur) > limit:
            self._warn_truncate("source sentence", len(cur), limit)
            cur = cur[:limit]
        if not (c.concat_context and s.src_context):
            return cur
        ctx = list(s.src_context)
        room = limit - len(cur) - 1
        if room < len(ctx):
            self._warn_truncate("source context", len(ctx), max(room, 0))
            # Keep the most recent context.
            ctx = ctx[len(ctx) - room:] if room > 0 else []
        return ctx + [BREAK_ID] + cur if ctx else cur

    def target_ids(self, s: ContextSample) -> list[int]:
        """Decoder target without BOS/EOS; 2to2 samples generate 'context BREAK current'."""
        c = self.config
        limit = c.max_positions - 1
        cur = list(s.tgt_current)
        if len(cur) > limit:
            self._warn_truncate("target sentence", len(cur), limit)
            cur = cur[:limit]
        if c.concat_context and s.kind == "2to2" and s.tgt_context is not None:
            ctx = list(s.tgt_context)
            room = limit - len(cur) - 1
            if room < len(ctx):
                self._warn_truncate("target context", len(ctx), max(room, 0))
                ctx = ctx[len(ctx) - room:] if room > 0 else []
            return ctx + [BREAK_ID] + cur if ctx else cur
        return cur

    def context_ids(self, s: ContextSample) -> list[int]:
        if not s.src_context:
            raise ContractViolation(
                f"{self.config.label} needs source context; sample {s.doc_id}:{s.sent_index} has none"
            )
        ctx = list(s.src_context)
        if len(ctx) > self.config.max_positions:
            self._warn_truncate("context", len(ctx), self.config.max_positions)
            ctx = ctx[-self.config.max_positions:]
        return ctx

    def context_vector(self, s: ContextSample) -> np.ndarray:
        c = self.config
        if c.variant == "random_vec":
            key = zlib.crc32(f"{s.doc_id}\x00{s.sent_index}".encode("utf-8"))
            return random_vec_context((c.random_seed * 1_000_003 + key) % (2 ** 63), c.d_model)
        return single_vec_context(self.ctxlm, self.context_ids(s), c.vec_axis).vector

    def prepare(self, samples: Sequence[ContextSample], with_target: bool = True) -> Batch:
        c = self.config
        samples = list(samples)
        src = pad_ids([self.source_ids(s) for s in samples])
        src_mask = src != PAD_ID
        batch = Batch(samples, src, src_mask, None, None)
        if with_target:
            tgts = [self.target_ids(s) for s in samples]
            batch.tgt_in = pad_ids([[BOS_ID] + t for t in tgts])
            batch.tgt_out = pad_ids([t + [EOS_ID] for t in tgts])
        v = c.variant
        if v in CONTEXT_ENCODER_VARIANTS or v == "wordemb_in_par":
            batch.ctx = pad_ids([self.context_ids(s) for s in samples])
        if v in ("single_vec", "random_vec"):
            batch.vec = np.stack([self.context_vector(s) for s in samples])
            if c.vec_axis == "T" or v == "random_vec":
                batch.src_mask = np.concatenate([np.ones((len(samples), 1), bool), src_mask], axis=1)
        if v == "seq_emb":
            limit = self.ctxlm.config.max_positions
            seqs = [(self.context_ids(s) + [BREAK_ID] + list(s.src_current))[-limit:] for s in samples]
            ids = pad_ids(seqs)
            batch.hb = self.ctxlm.batch_hidden(ids)
            batch.hb_mask = ids != PAD_ID
        return batch

    # ----------------------------------------------------------------- forward
    def _embed(self, table: Parameter, ids: np.ndarray, offset: int = 0) -> Tensor:
        x = nk.scale(nk.embedding_lookup(table, ids), math.sqrt(self.config.d_model))
        return nk.add(x, Tensor(self._pe[offset: offset + ids.shape[1]]))

    def _mha(self, prefix, xq, xkv, mask):
        return multi_head_attention(self.params, prefix, xq, xkv, mask, self.config.n_heads, self._capture)

    def _source_input(self, batch: Batch) -> Tensor:
        c = self.config
        d = c.d_model
        emb = nk.scale(nk.embedding_lookup(self.src_embedding, batch.src), math.sqrt(d))
        if batch.vec is not None:
            b, t = batch.src.shape
            vec = Tensor(batch.vec.reshape(b, 1, d).astype(emb.dtype))
            if c.vec_axis == "F":
                tiled = nk.broadcast_to(vec, (b, t, d))
                emb = nk.matmul(nk.concat([emb, tiled], axis=-1), self.params["vec_proj.w"])
            else:
                emb = nk.concat([vec, emb], axis=1)
        return nk.add(emb, Tensor(self._pe[: emb.shape[1]]))

    def _encode_context(self, batch: Batch) -> tuple[Tensor, np.ndarray]:
        c = self.config
        x = self._embed(self.ctx_embedding, batch.ctx)
        mask = key_mask(batch.ctx, PAD_ID)
        if c.variant != "wordemb_in_par":
            for i in range(c.ctx_layers):
                x = encoder_layer(self.params, f"ctx_enc.{i}", x, mask, c.n_heads)
        return x, mask

    def encode_batch(self, batch: Batch) -> Memory:
        c = self.config
        x = self._source_input(batch)
        mask = batch.src_mask[:, None, None, :]
        mem = Memory(x, mask)
        hb = hb_mask = None
        if batch.hb is not None:
            hb = Tensor(batch.hb.astype(x.dtype))
            hb_mask = batch.hb_mask[:, None, None, :]
            mem.hb, mem.hb_mask = hb, hb_mask
        if c.variant in CONTEXT_ENCODER_VARIANTS or c.variant == "wordemb_in_par":
            mem.ctx, mem.ctx_mask = self._encode_context(batch)

        fuse_enc = c.variant == "seq_emb" and "e" in c.seq_emb_where.split("&")
        n = c.n_layers
        for i in range(n):
            if c.variant == "multi_out" and i == n - 1:
                h_prev = x
            fuse = None
            if fuse_enc:
                def fuse(q, self_out, i=i):
                    b_out = self._mha(f"enc.{i}.bert_attn", q, hb, hb_mask)
                    return gate_combine(self_out, b_out, self.params, f"enc.{i}.bert_gate")
            x = encoder_layer(self.params, f"enc.{i}", x, mask, c.n_heads, fuse)
        if c.variant == "multi_out":
            ctx_out = self._mha("enc_out.ctx_attn", h_prev, mem.ctx, mem.ctx_mask)
            x = gate_combine(x, ctx_out, self.params, "enc_out.gate")
        mem.src = x
        return mem

    def decode(self, mem: Memory, tgt_in: np.ndarray) -> Tensor:
        """Teacher-forced decoder over ``tgt_in``; returns logits [B, T, V]."""
        c = self.config
        p = self.params
        y = self._embed(self.tgt_embedding, tgt_in)
        self_mask = causal_mask(tgt_in, PAD_ID)
        fuse_dec = c.variant == "seq_emb" and "d" in c.seq_emb_where.split("&")
        for i in range(c.n_layers):
            pre = f"dec.{i}"
            y = layer_norm(p, f"{pre}.ln1", nk.add(y, self._mha(f"{pre}.self", y, y, self_mask)))
            a = self._mha(f"{pre}.cross", y, mem.src, mem.src_mask)
            if c.variant in ("multi_in_par", "wordemb_in_par"):
                a_c = self._mha(f"{pre}.ctx_attn", y, mem.ctx, mem.ctx_mask)
                a = gate_combine(a, a_c, p, f"{pre}.gate")
            elif c.variant == "multi_in_seq":
                a_c = self._mha(f"{pre}.ctx_attn", a, mem.ctx, mem.ctx_mask)
                a = gate_combine(a, a_c, p, f"{pre}.gate")
            elif fuse_dec:
                b_out = self._mha(f"{pre}.bert_attn", y, mem.hb, mem.hb_mask)
                a = gate_combine(a, b_out, p, f"{pre}.bert_gate")
            y = layer_norm(p, f"{pre}.ln2", nk.add(y, a))
            y = layer_norm(p, f"{pre}.ln3", nk.add(y, ffn(p, f"{pre}.ff", y)))
        return linear(y, p["out.w"], p["out.b"])

    def logits(self, batch: Batch) -> Tensor:
        return self.decode(self.encode_batch(batch), batch.tgt_in)

    def loss(self, batch: Batch, label_smoothing: float = 0.0) -> Tensor:
        return nk.cross_entropy(self.logits(batch), batch.tgt_out, PAD_ID, label_smoothing)

    def sample_logits(self, sample: ContextSample) -> Tensor:
        return nk.getitem(self.logits(self.prepare([sample])), 0)


def count_params(model: DocTransformer) -> int:
    return int(sum(p.data.size for p in model.parameters()))


def encode(model: DocTransformer, src_ids: Sequence[int]) -> Tensor:
    """Encoder states [t, d] of a context-free source sentence."""
    sample = ContextSample(tuple(src_ids), (), (), None, "sent", "", 0)
    if model.config.uses_context and not model.config.concat_context:
        sample = ContextSample(tuple(src_ids), (DOCSTART_ID,), (), None, "2to1", "", 0)
    mem = model.encode_batch(model.prepare([sample], with_target=False))
    return nk.getitem(mem.src, 0)


def _forward(model: DocTransformer, sample: ContextSample, variants: tuple[str, ...]) -> Tensor:
    if model.config.variant not in variants:
        raise ConfigError(f"model variant {model.config.variant!r} is not one of {variants}")
    return model.sample_logits(sample)


def forward_multi_out(model: DocTransformer, sample: ContextSample) -> Tensor:
    return _forward(model, sample, ("multi_out",))


def forward_in_seq(model: DocTransformer, sample: ContextSample) -> Tensor:
    return _forward(model, sample, ("multi_in_seq",))


def forward_in_par(model: DocTransformer, sample: ContextSample) -> Tensor:
    return _forward(model, sample, ("multi_in_par",))


def forward_wordemb(model: DocTransformer, sample: ContextSample) -> Tensor:
    return _forward(model, sample, ("wordemb_in_par",))


def forward_seq_emb(model: DocTransformer, sample: ContextSample, where: str | None = None) -> Tensor:
    if where is not None and where != model.config.seq_emb_where:
        raise ConfigError(f"requested fusion {where!r} but model fuses {model.config.seq_emb_where!r}")
    return _forward(model, sample, ("seq_emb",))
