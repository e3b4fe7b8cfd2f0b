"""Beam search, greedy decoding and teacher-forced sequence scoring."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .. import numkernel as nk
from ..architectures import DocTransformer
from ..corpus import BOS_ID, BREAK_ID, DOCSTART_ID, EOS_ID, MASK_ID, PAD_ID, ContextSample
from ..architectures.model import pad_ids

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.6
# Tokens the decoder may never emit.
NEVER_EMIT = (PAD_ID, BOS_ID, DOCSTART_ID, MASK_ID)

diagnostics: Counter = Counter()


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]  # starts with BOS; ends with EOS when finished
    log_prob: float
    finished: bool
    forced: bool = False  # stopped by the length limit rather than EOS

    @property
    def length(self) -> int:
        return len(self.tokens) - 1

    def score(self, alpha: float) -> float:
        return self.log_prob / length_penalty(self.length, alpha)

    @property
    def output(self) -> list[int]:
        """Generated tokens without BOS/EOS."""
        return [t for t in self.tokens[1:] if t != EOS_ID]


def length_penalty(length: int, alpha: float) -> float:
    return ((5.0 + length) / 6.0) ** alpha


def default_max_len(model: DocTransformer, sample: ContextSample) -> int:
    n = len(model.source_ids(sample))
    return min(2 * n + 10, model.config.max_positions - 1)


def _allowed_mask(vocab_size: int, allowed: Iterable[int] | None) -> np.ndarray:
    mask = np.zeros(vocab_size, dtype=bool)
    if allowed is None:
        mask[:] = True
        mask[list(NEVER_EMIT)] = False
    else:
        mask[list(allowed)] = True
        mask[[PAD_ID, BOS_ID]] = False
    if not mask[EOS_ID]:
        raise ValueError("EOS must be an allowed token")
    return mask


def _step_log_probs(model: DocTransformer, mem, prefixes: np.ndarray) -> np.ndarray:
    logits = model.decode(mem.repeat(prefixes.shape[0]), prefixes)
    last = logits.data[:, -1, :].astype(np.float64)
    last = last - last.max(axis=-1, keepdims=True)
    return last - np.log(np.exp(last).sum(axis=-1, keepdims=True))


def beam_search(
    model: DocTransformer,
    sample: ContextSample,
    beam: int = 5,
    max_len: int | None = None,
    length_alpha: float = DEFAULT_ALPHA,
    allowed_tokens: Iterable[int] | None = None,
) -> list[Hypothesis]:
    """N-best list sorted by length-normalised score, best first.

    Each step keeps the ``beam`` most probable expansions of the live
    hypotheses; expansions ending in EOS leave the beam as finished. Search
    stops once ``beam`` hypotheses have finished and no live hypothesis can
    still outscore the best of them, or after ``max_len`` tokens. If nothing
    finished by then the surviving hypotheses are force-finished.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    if max_len is None:
        max_len = default_max_len(model, sample)
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    allowed = _allowed_mask(model.config.vocab_size, allowed_tokens)
    with nk.no_tape():
        mem = model.encode_batch(model.prepare([sample], with_target=False))
        live: list[tuple[tuple[int, ...], float]] = [((BOS_ID,), 0.0)]
        finished: list[Hypothesis] = []
        for step in range(1, max_len + 1):
            prefixes = np.array([t for t, _ in live], dtype=np.int64)
            lp = _step_log_probs(model, mem, prefixes)
            lp[:, ~allowed] = -np.inf
            totals = np.array([s for _, s in live])[:, None] + lp
            flat = totals.reshape(-1)
            # Stable sort: ties go to the earlier hypothesis, then the lower token id.
            order = np.argsort(-flat, kind="stable")
            order = order[np.isfinite(flat[order])][:beam]
            v = lp.shape[1]
            new_live = []
            for idx in order:
                h, tok = divmod(int(idx), v)
                tokens = live[h][0] + (tok,)
                if tok == EOS_ID:
                    finished.append(Hypothesis(tokens, float(flat[idx]), True))
                else:
                    new_live.append((tokens, float(flat[idx])))
            live = new_live
            if not live:
                break
            if len(finished) >= beam:
                # log-probs only fall, so a live hypothesis can at best reach s / lp(max_len)
                best_done = max(h.score(length_alpha) for h in finished)
                best_live = max(s for _, s in live) / length_penalty(max_len, length_alpha)
                if best_live <= best_done:
                    break
    if finished:
        out = finished
    else:
        out = [Hypothesis(t, s, False, forced=True) for t, s in live]
        diagnostics["forced_finish"] += 1
    out = sorted(out, key=lambda h: -h.score(length_alpha))
    return out[:beam]


def greedy(
    model: DocTransformer,
    sample: ContextSample,
    max_len: int | None = None,
    allowed_tokens: Iterable[int] | None = None,
) -> Hypothesis:
    if max_len is None:
        max_len = default_max_len(model, sample)
    allowed = _allowed_mask(model.config.vocab_size, allowed_tokens)
    with nk.no_tape():
        mem = model.encode_batch(model.prepare([sample], with_target=False))
        tokens = [BOS_ID]
        total = 0.0
        for _ in range(max_len):
            lp = _step_log_probs(model, mem, np.array([tokens], dtype=np.int64))[0]
            lp[~allowed] = -np.inf
            tok = int(np.argmax(lp))
            tokens.append(tok)
            total += float(lp[tok])
            if tok == EOS_ID:
                return Hypothesis(tuple(tokens), total, True)
    return Hypothesis(tuple(tokens), total, False, forced=True)


def _check_target(target: Sequence[int]) -> None:
    if len(target) < 2 or target[0] != BOS_ID or target[-1] != EOS_ID:
        raise ValueError("target must be BOS ... EOS")


def score_sequences(
    model: DocTransformer, sample: ContextSample, targets: Sequence[Sequence[int]]
) -> np.ndarray:
    """Teacher-forced log probability of each ``BOS ... EOS`` target (no normalisation)."""
    for t in targets:
        _check_target(t)
    with nk.no_tape():
        mem = model.encode_batch(model.prepare([sample], with_target=False))
        tgt_in = pad_ids([list(t[:-1]) for t in targets])
        tgt_out = pad_ids([list(t[1:]) for t in targets])
        logits = model.decode(mem.repeat(len(targets)), tgt_in).data.astype(np.float64)
    logits = logits - logits.max(axis=-1, keepdims=True)
    lp = logits - np.log(np.exp(logits).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(lp, tgt_out[..., None], axis=-1)[..., 0]
    picked[tgt_out == PAD_ID] = 0.0
    return picked.sum(axis=1)


def score_sequence(model: DocTransformer, sample: ContextSample, target_ids: Sequence[int]) -> float:
    return float(score_sequences(model, sample, [target_ids])[0])


def split_2to2(output_ids: Sequence[int]) -> list[int]:
    """Tokens after the last BREAK; the whole output if no BREAK was generated."""
    ids = [t for t in output_ids if t not in (BOS_ID, EOS_ID, PAD_ID)]
    positions = [i for i, t in enumerate(ids) if t == BREAK_ID]
    if not positions:
        diagnostics["split_2to2_no_break"] += 1
        log.warning("2to2 output without BREAK; keeping the full output")
        return ids
    return ids[positions[-1] + 1:]
