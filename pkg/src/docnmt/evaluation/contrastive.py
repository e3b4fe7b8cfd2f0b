"""Contrastive pronoun accuracy: does the model rank the correct translation first?"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..architectures import DocTransformer
from ..corpus import BOS_ID, BREAK_ID, DOCSTART_ID, EOS_ID, ContextSample, ContrastiveInstance, TextCodec
from ..decoding import score_sequences

# scorer(instance) -> scores for [correct, *contrastive]
Scorer = Callable[[ContrastiveInstance], Sequence[float]]

CONTEXT_SENTENCES = {"sent": 0, "2to1": 1, "2to2": 1, "3to1": 2}


def is_correct(scores: Sequence[float]) -> bool:
    """Strictly higher than every alternative; ties count as wrong."""
    scores = np.asarray(scores, dtype=np.float64)
    return bool(scores[0] > scores[1:].max())


def contrastive_accuracy(instances: Sequence[ContrastiveInstance], scorer: Scorer) -> float:
    if not instances:
        raise ValueError("no contrastive instances")
    hits = sum(is_correct(scorer(inst)) for inst in instances)
    return 100.0 * hits / len(instances)


def random_scorer(seed: int = 0) -> Scorer:
    """Independent uniform scores per candidate; the chance-level reference."""
    rng = np.random.default_rng(seed)

    def score(inst: ContrastiveInstance) -> np.ndarray:
        return rng.random(1 + len(inst.contrastive))

    return score


def _join(parts: Sequence[Sequence[int]]) -> tuple[int, ...]:
    out: list[int] = []
    for i, p in enumerate(parts):
        if i:
            out.append(BREAK_ID)
        out.extend(p)
    return tuple(out)


def instance_sample(inst: ContrastiveInstance, codec: TextCodec, kind: str, index: int = 0) -> ContextSample:
    n = CONTEXT_SENTENCES.get(kind)
    if n is None:
        raise ValueError(f"contrastive scoring does not support sample kind {kind!r}")
    src = tuple(codec.encode(inst.source))
    if kind == "sent":
        ctx: tuple[int, ...] = ()
    elif inst.context_sentences:
        ctx = _join([codec.encode(s) for s in inst.context_sentences[-n:]])
    else:
        ctx = (DOCSTART_ID,)
    tgt_ctx = None
    if kind == "2to2":
        if inst.context_target is None:
            raise ValueError("2to2 scoring needs the target-side context (ctx_tgt) of each instance")
        if inst.context_target:
            tgt_ctx = _join([codec.encode(s) for s in inst.context_target[-n:]])
        else:
            tgt_ctx = (DOCSTART_ID,)
    return ContextSample(src, ctx, (), tgt_ctx, kind, f"contrastive-{index}", 1)


def candidate_targets(
    model: DocTransformer, sample: ContextSample, candidates: Sequence[str], codec: TextCodec
) -> list[list[int]]:
    """BOS ... EOS id sequences; 2to2 single-encoder models score 'context BREAK candidate'."""
    prefix: list[int] = []
    if sample.kind == "2to2" and model.config.concat_context:
        prefix = list(sample.tgt_context) + [BREAK_ID]
    return [[BOS_ID] + prefix + codec.encode(c) + [EOS_ID] for c in candidates]


def model_scorer(model: DocTransformer, codec: TextCodec, kind: str) -> Scorer:
    counter = [0]

    def score(inst: ContrastiveInstance) -> np.ndarray:
        sample = instance_sample(inst, codec, kind, counter[0])
        counter[0] += 1
        targets = candidate_targets(model, sample, (inst.correct,) + inst.contrastive, codec)
        return score_sequences(model, sample, targets)

    return score


def contrastive_eval(
    model: DocTransformer, instances: Sequence[ContrastiveInstance], codec: TextCodec, kind: str = "2to1"
) -> float:
    """Accuracy (percent) of ranking the correct candidate strictly above all others."""
    if not model.config.uses_context:
        kind = "sent"
    return contrastive_accuracy(instances, model_scorer(model, codec, kind))
