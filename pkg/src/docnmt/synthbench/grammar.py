"""Synthetic bilingual discourse language with context-dependent pronoun agreement.

Every noun has a source gender and an independently drawn target gender. A
document alternates an introduction sentence ("det noun verb .") with a
follow-up whose subject pronoun refers back to that noun. The source pronoun
agrees with the source gender and the target pronoun with the target gender,
so neither side's pronoun can be translated without seeing the antecedent.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..corpus import (
    ContrastiveInstance,
    Document,
    ParallelDocumentCorpus,
    atomic_write_text,
    load_contrastive,
    load_documents,
    load_parallel,
    save_contrastive,
    save_documents,
    save_parallel,
)


class GrammarError(ValueError):
    pass


SRC_DETS = ("le", "la", "lu", "lo", "li")
TGT_DETS = ("der", "die", "das", "dem", "den")
SRC_PRONS = ("il", "elle", "ul", "ol", "al")
TGT_PRONS = ("er", "sie", "es", "ez", "ix")

_SRC_SYLL = ("ba", "ce", "di", "fo", "gu", "la", "me", "ni", "po", "ru", "sa", "te", "vi", "zo", "mi", "ra")
_TGT_SYLL = ("kal", "ber", "tin", "mog", "rup", "sef", "hul", "dak", "wen", "gor", "pil", "zat", "fen", "lok")


@dataclass(frozen=True)
class Noun:
    src: str
    tgt: str
    src_gender: int
    tgt_gender: int


@dataclass(frozen=True)
class SynthGrammar:
    n_genders: int
    nouns: tuple[Noun, ...]
    verbs: tuple[tuple[str, str], ...]  # introduction-sentence verbs (src, tgt)
    actions: tuple[tuple[str, str], ...]  # follow-up verbs
    adjectives: tuple[tuple[str, str], ...]
    adverbs: tuple[tuple[str, str], ...]
    src_dets: tuple[str, ...]
    tgt_dets: tuple[str, ...]
    src_prons: tuple[str, ...]
    tgt_prons: tuple[str, ...]
    gender_weights: tuple[float, ...]  # prior over target gender when sampling nouns
    adjective_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        g = self.n_genders
        if not 1 <= g <= len(SRC_DETS):
            raise GrammarError(f"n_genders must be in 1..{len(SRC_DETS)}")
        for name in ("src_dets", "tgt_dets", "src_prons", "tgt_prons", "gender_weights"):
            if len(getattr(self, name)) != g:
                raise GrammarError(f"{name} must have one entry per gender")
        if not self.nouns:
            raise GrammarError("grammar needs at least one noun")
        for n in self.nouns:
            if not (0 <= n.src_gender < g and 0 <= n.tgt_gender < g):
                raise GrammarError(f"noun {n.src!r} has an invalid gender")
        if not self.verbs or not self.actions or not self.adverbs:
            raise GrammarError("grammar needs verbs, actions and adverbs")

    # -------------------------------------------------------------- lookups
    def src_noun_index(self) -> dict[str, Noun]:
        return {n.src: n for n in self.nouns}

    def tgt_noun_index(self) -> dict[str, Noun]:
        return {n.tgt: n for n in self.nouns}

    def src_vocabulary(self) -> set[str]:
        words = {n.src for n in self.nouns} | set(self.src_dets) | set(self.src_prons) | {"."}
        for table in (self.verbs, self.actions, self.adjectives, self.adverbs):
            words |= {s for s, _ in table}
        return words

    def tgt_vocabulary(self) -> set[str]:
        words = {n.tgt for n in self.nouns} | set(self.tgt_dets) | set(self.tgt_prons) | {"."}
        for table in (self.verbs, self.actions, self.adjectives, self.adverbs):
            words |= {t for _, t in table}
        return words

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SynthGrammar":
        obj = dict(obj)
        obj["nouns"] = tuple(Noun(**n) for n in obj["nouns"])
        for key in ("verbs", "actions", "adjectives", "adverbs"):
            obj[key] = tuple(tuple(p) for p in obj[key])
        for key in ("src_dets", "tgt_dets", "src_prons", "tgt_prons", "gender_weights"):
            obj[key] = tuple(obj[key])
        return cls(**obj)


def _words(rng: np.random.Generator, syllables: Sequence[str], n: int, taken: set[str], n_syll: int) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(syllables, size=n_syll))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_grammar(
    seed: int = 0,
    n_genders: int = 3,
    nouns_per_cell: int = 4,
    n_verbs: int = 6,
    n_actions: int = 6,
    n_adjectives: int = 6,
    n_adverbs: int = 4,
    gender_weights: Sequence[float] | None = None,
    adjective_rate: float = 0.5,
) -> SynthGrammar:
    """Balanced grammar: ``nouns_per_cell`` nouns for every (source, target) gender pair."""
    if nouns_per_cell < 1:
        raise GrammarError("nouns_per_cell must be >= 1")
    rng = np.random.default_rng(seed)
    taken_s = set(SRC_DETS) | set(SRC_PRONS)
    taken_t = set(TGT_DETS) | set(TGT_PRONS)
    cells = [(gs, gt) for gs in range(n_genders) for gt in range(n_genders)]
    n_nouns = nouns_per_cell * len(cells)
    src_nouns = _words(rng, _SRC_SYLL, n_nouns, taken_s, 3)
    tgt_nouns = _words(rng, _TGT_SYLL, n_nouns, taken_t, 2)
    nouns = tuple(
        Noun(src_nouns[k], tgt_nouns[k], *cells[k % len(cells)]) for k in range(n_nouns)
    )

    def pairs(n, n_syll_s, n_syll_t):
        return tuple(zip(_words(rng, _SRC_SYLL, n, taken_s, n_syll_s), _words(rng, _TGT_SYLL, n, taken_t, n_syll_t)))

    weights = tuple(float(w) for w in (gender_weights or [1.0] * n_genders))
    if len(weights) != n_genders or min(weights) < 0 or sum(weights) <= 0:
        raise GrammarError("gender_weights must be non-negative, one per gender, not all zero")
    total = sum(weights)
    return SynthGrammar(
        n_genders=n_genders,
        nouns=nouns,
        verbs=pairs(n_verbs, 2, 1),
        actions=pairs(n_actions, 4, 2),
        adjectives=pairs(n_adjectives, 2, 3),
        adverbs=pairs(n_adverbs, 4, 3),
        src_dets=SRC_DETS[:n_genders],
        tgt_dets=TGT_DETS[:n_genders],
        src_prons=SRC_PRONS[:n_genders],
        tgt_prons=TGT_PRONS[:n_genders],
        gender_weights=tuple(w / total for w in weights),
        adjective_rate=adjective_rate,
        seed=seed,
    )


# ------------------------------------------------------------------ corpora
@dataclass
class SynthCorpusBundle:
    grammar: SynthGrammar
    train: ParallelDocumentCorpus
    dev: ParallelDocumentCorpus
    test: ParallelDocumentCorpus
    contrastive: list[ContrastiveInstance]
    mono_src: list[Document] = field(default_factory=list)
    mono_tgt: list[Document] = field(default_factory=list)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        atomic_write_text(d / "grammar.json", json.dumps(self.grammar.to_json(), sort_keys=True, indent=1) + "\n")
        for name in ("train", "dev", "test"):
            save_parallel(getattr(self, name), d / f"{name}.src.jsonl", d / f"{name}.tgt.jsonl")
        save_contrastive(d / "contrastive.jsonl", self.contrastive)
        save_documents(d / "mono.src.jsonl", self.mono_src)
        save_documents(d / "mono.tgt.jsonl", self.mono_tgt)

    @classmethod
    def load(cls, directory) -> "SynthCorpusBundle":
        d = Path(directory)
        grammar = SynthGrammar.from_json(json.loads((d / "grammar.json").read_text(encoding="utf-8")))
        splits = {
            name: load_parallel(d / f"{name}.src.jsonl", d / f"{name}.tgt.jsonl", escape=False)
            for name in ("train", "dev", "test")
        }
        return cls(
            grammar,
            splits["train"],
            splits["dev"],
            splits["test"],
            load_contrastive(d / "contrastive.jsonl"),
            load_documents(d / "mono.src.jsonl", escape=False),
            load_documents(d / "mono.tgt.jsonl", escape=False),
        )


def _noun_plan(grammar: SynthGrammar, rng: np.random.Generator, n_docs: int, per_doc: int) -> list[list[int]]:
    """Antecedent nouns per document, distinct within a document.

    Under uniform gender weights the nouns are dealt from consecutive random
    permutations, so every (source, target) gender cell is used equally often.
    """
    n = len(grammar.nouns)
    balanced = len(set(grammar.gender_weights)) == 1
    if balanced and n % per_doc == 0:
        flat: list[int] = []
        while len(flat) < n_docs * per_doc:
            flat.extend(int(i) for i in rng.permutation(n))
        return [flat[k * per_doc: (k + 1) * per_doc] for k in range(n_docs)]
    p = np.array([grammar.gender_weights[x.tgt_gender] for x in grammar.nouns])
    p = p / p.sum()
    if np.count_nonzero(p) < per_doc:
        raise GrammarError("too few nouns with non-zero weight for the requested document length")
    return [[int(i) for i in rng.choice(n, size=per_doc, replace=False, p=p)] for _ in range(n_docs)]


def _pick(rng: np.random.Generator, table):
    return table[int(rng.integers(len(table)))]


def _intro(grammar: SynthGrammar, noun: Noun, rng: np.random.Generator) -> tuple[str, str]:
    verb = _pick(rng, grammar.verbs)
    src = [grammar.src_dets[noun.src_gender]]
    tgt = [grammar.tgt_dets[noun.tgt_gender]]
    if grammar.adjectives and rng.random() < grammar.adjective_rate:
        adj = _pick(rng, grammar.adjectives)
        src.append(adj[0])
        tgt.append(adj[1])
    src += [noun.src, verb[0], "."]
    tgt += [noun.tgt, verb[1], "."]
    return " ".join(src), " ".join(tgt)


def _follow_up(grammar: SynthGrammar, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Source and target follow-up sentences with a pronoun slot at position 0."""
    act = _pick(rng, grammar.actions)
    adv = _pick(rng, grammar.adverbs)
    return ["", act[0], adv[0], "."], ["", act[1], adv[1], "."]


def _fill(words: list[str], pronoun: str) -> str:
    return " ".join([pronoun] + words[1:])


def generate_documents(
    grammar: SynthGrammar, n_docs: int, sents_per_doc: int, rng: np.random.Generator, prefix: str
) -> tuple[list[Document], list[Document], list[ContrastiveInstance]]:
    if n_docs < 1:
        raise GrammarError("n_docs must be >= 1")
    if sents_per_doc < 2 or sents_per_doc % 2:
        raise GrammarError("sents_per_doc must be an even number >= 2")
    per_doc = sents_per_doc // 2
    if per_doc > len(grammar.nouns):
        raise GrammarError(
            f"inventory too small: {per_doc} distinct antecedents per document but only {len(grammar.nouns)} nouns"
        )
    plan = _noun_plan(grammar, rng, n_docs, per_doc)
    width = len(str(n_docs - 1))
    src_docs, tgt_docs, instances = [], [], []
    for k, nouns in enumerate(plan):
        src, tgt = [], []
        for idx in nouns:
            noun = grammar.nouns[idx]
            s_intro, t_intro = _intro(grammar, noun, rng)
            s_words, t_words = _follow_up(grammar, rng)
            s_next = _fill(s_words, grammar.src_prons[noun.src_gender])
            t_next = _fill(t_words, grammar.tgt_prons[noun.tgt_gender])
            src += [s_intro, s_next]
            tgt += [t_intro, t_next]
            wrong = tuple(
                _fill(t_words, p) for g, p in enumerate(grammar.tgt_prons) if g != noun.tgt_gender
            )
            instances.append(
                ContrastiveInstance((s_intro,), s_next, t_next, wrong, grammar.tgt_prons[noun.tgt_gender], (t_intro,))
            )
        doc_id = f"{prefix}-{k:0{width}d}"
        src_docs.append(Document(doc_id, tuple(src), headline_index=0))
        tgt_docs.append(Document(doc_id, tuple(tgt), headline_index=0))
    return src_docs, tgt_docs, instances


def gen_corpus(
    grammar: SynthGrammar,
    n_docs: int = 200,
    sents_per_doc: int = 12,
    n_test_docs: int = 50,
    n_dev_docs: int = 20,
    n_mono_docs: int = 200,
    seed: int | None = None,
) -> SynthCorpusBundle:
    """Seeded train/dev/test bitext, the test contrastive set and monolingual documents.

    Monolingual target documents are drawn independently of the bitext for
    back-translation; monolingual source documents feed context-LM pretraining.
    """
    if n_docs < 1:
        raise GrammarError("n_docs must be >= 1")
    seed = grammar.seed if seed is None else seed
    streams = [np.random.default_rng([seed, k]) for k in range(5)]
    tr_s, tr_t, _ = generate_documents(grammar, n_docs, sents_per_doc, streams[0], "train")
    dv_s, dv_t, _ = generate_documents(grammar, max(n_dev_docs, 1), sents_per_doc, streams[1], "dev")
    te_s, te_t, contrastive = generate_documents(grammar, max(n_test_docs, 1), sents_per_doc, streams[2], "test")
    mono_src = generate_documents(grammar, max(n_mono_docs, 1), sents_per_doc, streams[3], "mono")[0]
    mono_tgt = generate_documents(grammar, max(n_mono_docs, 1), sents_per_doc, streams[4], "mono")[1]
    return SynthCorpusBundle(
        grammar,
        ParallelDocumentCorpus(tr_s, tr_t, {"split": "train"}),
        ParallelDocumentCorpus(dv_s, dv_t, {"split": "dev"}),
        ParallelDocumentCorpus(te_s, te_t, {"split": "test"}),
        contrastive,
        mono_src,
        mono_tgt,
    )
