"""Corpus BLEU, token-length diagnostics and pronoun translation accuracy."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..corpus import atomic_write_text, tokenize

MAX_ORDER = 4


class MetricError(ValueError):
    pass


@dataclass
class EvalReport:
    bleu: float
    ngram_precisions: list  # per order; None where the hypotheses have no n-grams of that order
    brevity_penalty: float
    hyp_tokens: int
    ref_tokens: int
    token_delta: int
    apt: float | None = None
    contrastive_accuracy: float | None = None
    split: str = "all"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(**obj)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def _prepare(text: str, mode: str, lowercase: bool) -> list[str]:
    return tokenize(text.lower() if lowercase else text, mode)


def bleu_stats(hyps: Sequence[str], refs: Sequence[str], mode: str = "word", lowercase: bool = False):
    """Summed clipped matches and totals per order, plus hypothesis/reference lengths."""
    if len(hyps) != len(refs):
        raise MetricError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not refs:
        raise MetricError("no references")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        ht = _prepare(h, mode, lowercase)
        rt = _prepare(r, mode, lowercase)
        hyp_len += len(ht)
        ref_len += len(rt)
        for n in range(1, MAX_ORDER + 1):
            hc = _ngrams(ht, n)
            rc = _ngrams(rt, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(ht) - n + 1, 0)
    return matches, totals, hyp_len, ref_len


def bleu_from_stats(matches, totals, hyp_len, ref_len, split: str = "all") -> EvalReport:
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    precisions = [m / t if t else None for m, t in zip(matches, totals)]
    used = [p for p in precisions if p is not None]
    if not used or any(p == 0 for p in used):
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in used) / len(used))
    return EvalReport(score, precisions, bp, hyp_len, ref_len, hyp_len - ref_len, split=split)


def bleu(
    hyps: Sequence[str], refs: Sequence[str], mode: str = "word", lowercase: bool = False, split: str = "all"
) -> EvalReport:
    """Corpus-level BLEU over n = 1..4 without smoothing.

    Orders for which the hypotheses contain no n-grams at all are left out of
    the geometric mean, so very short identical corpora still score 100.
    """
    return bleu_from_stats(*bleu_stats(hyps, refs, mode, lowercase), split=split)


def length_report(
    hyps: Sequence[str],
    refs: Sequence[str],
    mode: str = "word",
    splits: Mapping[str, Sequence[int]] | None = None,
) -> dict:
    """Token counts and hypothesis-minus-reference delta, overall and per split."""
    if len(hyps) != len(refs):
        raise MetricError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    h = [len(tokenize(x, mode)) for x in hyps]
    r = [len(tokenize(x, mode)) for x in refs]

    def summary(idx):
        ht = sum(h[i] for i in idx)
        rt = sum(r[i] for i in idx)
        return {"hyp_tokens": ht, "ref_tokens": rt, "token_delta": ht - rt}

    out = {"all": summary(range(len(h)))}
    for name, idx in (splits or {}).items():
        if len(idx):
            out[name] = summary(idx)
    return out


@dataclass
class PronounLexicon:
    """Source pronoun -> acceptable target counterparts (matched case-insensitively)."""

    entries: dict[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        norm = {}
        for k, forms in self.entries.items():
            forms = frozenset(f.lower() for f in forms)
            if not forms:
                raise MetricError(f"pronoun {k!r} has no target counterparts")
            norm[k.lower()] = forms
        self.entries = norm

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def counterparts(self, word: str) -> frozenset:
        return self.entries[word.lower()]

    def to_json(self) -> dict:
        return {k: sorted(v) for k, v in sorted(self.entries.items())}

    @classmethod
    def from_json(cls, obj: dict) -> "PronounLexicon":
        return cls({k: frozenset(v) for k, v in obj.items()})

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "PronounLexicon":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _aligned(alignment, i: int, n_src: int, tgt: list[str], which: str, sent: int) -> list[str]:
    out = []
    for a, b in alignment:
        if not (0 <= a < n_src and 0 <= b < len(tgt)):
            raise MetricError(f"sentence {sent}: {which} alignment {a}-{b} out of bounds")
        if a == i:
            out.append(tgt[b].lower())
    return out


def apt(
    srcs: Sequence[str],
    hyps: Sequence[str],
    refs: Sequence[str],
    lexicon: PronounLexicon,
    src_hyp_align: Sequence,
    src_ref_align: Sequence,
) -> float | None:
    """Share of source pronoun occurrences translated with the reference's counterpart.

    An occurrence is scorable when the reference aligns it to an acceptable
    counterpart; it counts as correct when the hypothesis-aligned tokens contain
    that same form. Returns None when nothing is scorable.
    """
    n = len(srcs)
    if not (len(hyps) == len(refs) == len(src_hyp_align) == len(src_ref_align) == n):
        raise MetricError("sources, hypotheses, references and alignments must be aligned")
    correct = total = 0
    for k in range(n):
        s = srcs[k].split()
        h = hyps[k].split()
        r = refs[k].split()
        _aligned(src_hyp_align[k], -1, len(s), h, "hypothesis", k)
        _aligned(src_ref_align[k], -1, len(s), r, "reference", k)
        for i, word in enumerate(s):
            if word not in lexicon:
                continue
            ok = lexicon.counterparts(word)
            ref_forms = {t for t in _aligned(src_ref_align[k], i, len(s), r, "reference", k) if t in ok}
            if not ref_forms:
                continue
            total += 1
            hyp_forms = set(_aligned(src_hyp_align[k], i, len(s), h, "hypothesis", k))
            correct += bool(hyp_forms & ref_forms)
    return 100.0 * correct / total if total else None
