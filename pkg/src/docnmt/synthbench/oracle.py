"""Grammar oracles: reference scorers and antecedent-pronoun agreement counting."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..corpus import ContrastiveInstance, Document
from .grammar import SynthGrammar


def antecedent(grammar: SynthGrammar, sentence: str, side: str = "src"):
    """Last noun of the sentence, or None."""
    index = grammar.src_noun_index() if side == "src" else grammar.tgt_noun_index()
    found = None
    for w in sentence.split():
        if w in index:
            found = index[w]
    return found


def pronoun_gender(grammar: SynthGrammar, sentence: str, side: str = "src") -> int | None:
    prons = grammar.src_prons if side == "src" else grammar.tgt_prons
    for w in sentence.split():
        if w in prons:
            return prons.index(w)
    return None


def oracle_scorer(grammar: SynthGrammar):
    """Scores 1 for candidates whose pronoun matches the antecedent's target gender."""

    def score(inst: ContrastiveInstance) -> np.ndarray:
        noun = antecedent(grammar, inst.context_sentences[-1]) if inst.context_sentences else None
        want = None if noun is None else grammar.tgt_prons[noun.tgt_gender]
        cands = (inst.correct,) + tuple(inst.contrastive)
        return np.array([1.0 if want is not None and want in c.split() else 0.0 for c in cands])

    return score


def majority_scorer(grammar: SynthGrammar):
    """Context-free: always prefers the pronoun of the most probable target gender."""
    best = grammar.tgt_prons[int(np.argmax(grammar.gender_weights))]

    def score(inst: ContrastiveInstance) -> np.ndarray:
        cands = (inst.correct,) + tuple(inst.contrastive)
        return np.array([1.0 if best in c.split() else 0.0 for c in cands])

    return score


def agreement_counts(grammar: SynthGrammar, docs: Sequence[Document], side: str = "src") -> tuple[int, int]:
    """(agreeing, total) over sentences that should carry a pronoun.

    Every odd-indexed sentence refers back to the noun of the sentence before
    it. It agrees when its first pronoun has that noun's gender on ``side``; a
    missing noun or pronoun counts as disagreement.
    """
    agree = total = 0
    for doc in docs:
        for i in range(1, len(doc.sentences), 2):
            total += 1
            noun = antecedent(grammar, doc.sentences[i - 1], side)
            g = pronoun_gender(grammar, doc.sentences[i], side)
            if noun is None or g is None:
                continue
            agree += g == (noun.src_gender if side == "src" else noun.tgt_gender)
    return agree, total


def agreement_rate(grammar: SynthGrammar, docs: Sequence[Document], side: str = "src") -> float:
    agree, total = agreement_counts(grammar, docs, side)
    return 100.0 * agree / total if total else float("nan")


def shuffle_context(instances: Sequence[ContrastiveInstance], seed: int = 0) -> list[ContrastiveInstance]:
    """Pair every instance with another instance's context (a derangement when possible)."""
    n = len(instances)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    if n > 1:
        perm = np.roll(perm, 1)[np.argsort(perm)]
    out = []
    for i, inst in enumerate(instances):
        donor = instances[int(perm[i])]
        out.append(
            ContrastiveInstance(
                donor.context_sentences, inst.source, inst.correct, inst.contrastive, inst.pronoun_label,
                donor.context_target,
            )
        )
    return out
