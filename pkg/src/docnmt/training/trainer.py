"""Training loop, resumable state, and warm-started context fine-tuning."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..architectures import DocTransformer, ModelConfig, load_model, save_model
from ..architectures.config import CONTEXT_ENCODER_VARIANTS, ConfigError
from ..architectures.contextlm import ContextLM
from ..corpus import ContextSample, atomic_write_text
from ..numkernel import Tape, default_dtype, no_tape
from .config import TrainConfig
from .optim import AdamState, adam_step, noam_lr

log = logging.getLogger(__name__)

NEEDS_SOURCE_CONTEXT = ("multi_out", "multi_in_seq", "multi_in_par", "wordemb_in_par", "seq_emb", "single_vec")


class TrainingError(ValueError):
    pass


def check_compatibility(config: ModelConfig, samples: Sequence[ContextSample]) -> None:
    """Reject variant/sample-kind combinations before any step is taken."""
    if not samples:
        raise TrainingError("no training samples")
    if config.variant in NEEDS_SOURCE_CONTEXT:
        bad = [s for s in samples if not s.src_context]
        if bad:
            raise TrainingError(
                f"variant {config.label} needs source context but {len(bad)} samples "
                f"(kind {bad[0].kind!r}) have none"
            )


def sample_length(model: DocTransformer, s: ContextSample) -> int:
    return max(len(model.source_ids(s)), len(model.target_ids(s)) + 1)


def make_buckets(model: DocTransformer, samples: Sequence[ContextSample], batch_tokens: int) -> list[list[int]]:
    """Length-sorted batches whose padded size stays within ``batch_tokens``."""
    lengths = [sample_length(model, s) for s in samples]
    longest = max(lengths)
    if batch_tokens < longest:
        raise TrainingError(f"batch_tokens {batch_tokens} < longest sample ({longest} tokens)")
    order = sorted(range(len(samples)), key=lambda i: (lengths[i], i))
    buckets: list[list[int]] = []
    current: list[int] = []
    width = 0
    for i in order:
        w = max(width, lengths[i])
        if current and w * (len(current) + 1) > batch_tokens:
            buckets.append(current)
            current, w = [], lengths[i]
        current.append(i)
        width = w
    if current:
        buckets.append(current)
    return buckets


def epoch_order(n_buckets: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n_buckets)


def evaluate_loss(model: DocTransformer, samples: Sequence[ContextSample], batch_tokens: int = 2048) -> float:
    """Token-weighted mean cross-entropy without label smoothing."""
    if not samples:
        return float("nan")
    total = 0.0
    n = 0
    with no_tape():
        for bucket in make_buckets(model, samples, max(batch_tokens, 1 + max(sample_length(model, s) for s in samples))):
            batch = model.prepare([samples[i] for i in bucket])
            k = batch.n_target_tokens
            total += model.loss(batch).item() * k
            n += k
    return total / max(n, 1)


@dataclass
class TrainState:
    step: int
    adam: AdamState
    best_val_loss: float = float("inf")
    seed: int = 0

    def save(self, path) -> None:
        path = Path(path)
        arrays = {}
        for name, m in self.adam.m.items():
            arrays[f"m::{name}"] = m
            arrays[f"v::{name}"] = self.adam.v[name]
        meta = {
            "step": self.step,
            "adam_step": self.adam.step,
            "betas": [self.adam.beta1, self.adam.beta2],
            "eps": self.adam.eps,
            "best_val_loss": self.best_val_loss,
            "seed": self.seed,
        }
        tmp = path.with_name(f".{path.name}.tmp.npz")
        np.savez(tmp, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "TrainState":
        with np.load(path) as z:
            meta = json.loads(bytes(z["__meta__"]).decode("utf-8"))
            adam = AdamState(meta["betas"][0], meta["betas"][1], meta["eps"], meta["adam_step"])
            for key in z.files:
                if key.startswith("m::"):
                    adam.m[key[3:]] = z[key].copy()
                elif key.startswith("v::"):
                    adam.v[key[3:]] = z[key].copy()
        return cls(meta["step"], adam, meta["best_val_loss"], meta["seed"])


@dataclass
class TrainResult:
    model: DocTransformer
    state: TrainState
    history: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)


def _write_log(path: Path, history: list[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in history))


def train(
    model: DocTransformer,
    samples: Sequence[ContextSample],
    cfg: TrainConfig,
    val_samples: Sequence[ContextSample] | None = None,
    out_dir=None,
    resume_state: TrainState | None = None,
    history: list[dict] | None = None,
    vocab_hash: str = "",
) -> TrainResult:
    """Minimise teacher-forced cross-entropy with Adam and the warmup schedule.

    Batch order and dropout draws are pure functions of (seed, step), so a run
    resumed from a checkpoint and its state continues bit-identically.
    """
    samples = list(samples)
    check_compatibility(model.config, samples)
    params = model.parameters()
    buckets = make_buckets(model, samples, cfg.batch_tokens)
    if resume_state is None:
        state = TrainState(
            0, AdamState.create(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps), seed=cfg.seed
        )
    else:
        state = resume_state
    history = list(history or [])
    checkpoints: list[str] = []
    out = Path(out_dir) if out_dir is not None else None
    cache: dict[int, object] = {}
    model.zero_grad()

    while state.step < cfg.max_steps:
        epoch, pos = divmod(state.step, len(buckets))
        b_idx = int(epoch_order(len(buckets), cfg.seed, epoch)[pos])
        batch = cache.get(b_idx)
        if batch is None:
            batch = cache[b_idx] = model.prepare([samples[i] for i in buckets[b_idx]])
        step = state.step + 1
        lr = noam_lr(step, cfg.warmup_steps, model.config.d_model, cfg.lr_scale)
        with Tape() as tape:
            loss = model.loss(batch, cfg.label_smoothing)
        tape.backward(loss)
        adam_step(params, state.adam, lr)
        state.step = step

        record = None
        if cfg.log_every and step % cfg.log_every == 0:
            record = {"step": step, "lr": lr, "loss": loss.item(), "val_loss": None}
        if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 or step == cfg.max_steps:
            record = record or {"step": step, "lr": lr, "loss": loss.item(), "val_loss": None}
            if val_samples:
                val = evaluate_loss(model, val_samples, cfg.batch_tokens)
                record["val_loss"] = val
                state.best_val_loss = min(state.best_val_loss, val)
            if out is not None:
                ckpt = out / f"ckpt_{step:07d}.dnmt"
                save_model(model, ckpt, vocab_hash, {"step": step})
                state.save(out / f"state_{step:07d}.npz")
                checkpoints.append(str(ckpt))
        if record is not None:
            history.append(record)
            log.info("step %d lr %.3e loss %.4f", step, lr, record["loss"])
            if out is not None:
                _write_log(out / "train_log.jsonl", history)
    return TrainResult(model, state, history, checkpoints)


def resume(checkpoint, state_path, samples, cfg: TrainConfig, **kw) -> TrainResult:
    model, _ = load_model(checkpoint)
    return train(model, samples, cfg, resume_state=TrainState.load(state_path), **kw)


def warm_start(
    baseline: DocTransformer, config: ModelConfig, ctxlm: ContextLM | None = None, seed: int = 0
) -> tuple[DocTransformer, list[str]]:
    """Context model initialised from a sentence-level baseline.

    Shared parameters are loaded from the baseline, each context-encoder layer
    is a copy of the matching baseline encoder layer, and everything else
    (gates, context attentions, projections) keeps its fresh initialisation.
    Returns the model and the sorted names of the fresh parameters.
    """
    b = baseline.config
    for key in ("d_model", "vocab_size", "n_layers", "d_ff", "n_heads"):
        if getattr(b, key) != getattr(config, key):
            raise ConfigError(f"baseline {key}={getattr(b, key)} incompatible with {getattr(config, key)}")
    model = DocTransformer(config, ctxlm=ctxlm, seed=seed)
    dtype = default_dtype()
    mismatched = []
    fresh = []
    for name, p in model.params.items():
        src_name = name
        if name.startswith("ctx_enc."):
            src_name = "enc." + name[len("ctx_enc."):]
        elif name == "embed.ctx":
            src_name = "embed.src"
        source = baseline.params.get(src_name)
        if source is None:
            fresh.append(name)
            continue
        if source.data.shape != p.data.shape:
            mismatched.append(f"{name}: {source.data.shape} vs {p.data.shape}")
            continue
        p.assign(source.data.astype(dtype))
    if mismatched:
        raise ConfigError(f"checkpoint shape mismatch: {mismatched}")
    if config.variant in CONTEXT_ENCODER_VARIANTS and config.ctx_layers > b.n_layers:
        raise ConfigError("context encoder deeper than the baseline encoder it is copied from")
    return model, sorted(fresh)


def finetune_context_model(
    baseline_ckpt,
    config: ModelConfig,
    samples: Sequence[ContextSample],
    cfg: TrainConfig,
    ctxlm: ContextLM | None = None,
    **kw,
) -> TrainResult:
    baseline = baseline_ckpt if isinstance(baseline_ckpt, DocTransformer) else load_model(baseline_ckpt)[0]
    model, _ = warm_start(baseline, config, ctxlm=ctxlm, seed=cfg.seed)
    return train(model, samples, cfg, **kw)
