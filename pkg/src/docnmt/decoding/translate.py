"""Corpus translation and sentence- or document-level back-translation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..architectures import DocTransformer
from ..architectures.config import ConfigError
from ..corpus import (
    ContextSample,
    Document,
    ParallelDocumentCorpus,
    TextCodec,
    atomic_write_text,
    document_samples,
    read_jsonl,
    save_parallel,
    load_parallel,
    write_jsonl,
)
from .search import DEFAULT_ALPHA, beam_search, split_2to2

PROVENANCE = ("sent_bt", "doc_bt")


@dataclass(frozen=True)
class Translation:
    doc_id: str
    index: int
    ids: tuple[int, ...]
    text: str
    score: float

    def to_json(self) -> dict:
        return {"doc": self.doc_id, "index": self.index, "hyp": self.text, "score": self.score}


def translate_sample(
    model: DocTransformer, sample: ContextSample, beam: int = 5, length_alpha: float = DEFAULT_ALPHA
) -> tuple[list[int], float]:
    best = beam_search(model, sample, beam=beam, length_alpha=length_alpha)[0]
    ids = best.output
    if sample.kind == "2to2" and model.config.concat_context:
        ids = split_2to2(ids)
    return ids, best.log_prob


def translate(
    model: DocTransformer,
    samples: Sequence[ContextSample],
    codec: TextCodec,
    beam: int = 5,
    length_alpha: float = DEFAULT_ALPHA,
) -> list[Translation]:
    out = []
    for s in samples:
        ids, score = translate_sample(model, s, beam, length_alpha)
        out.append(Translation(s.doc_id, s.sent_index, tuple(ids), codec.decode(ids), score))
    return out


def save_translations(path, translations: Sequence[Translation]) -> None:
    write_jsonl(path, (t.to_json() for t in translations))


def load_translations(path) -> list[dict]:
    return read_jsonl(path)


@dataclass(frozen=True)
class SyntheticCorpus:
    corpus: ParallelDocumentCorpus  # machine-generated source side
    provenance: str
    generator: str

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"provenance must be one of {PROVENANCE}")

    def save(self, source_path, target_path) -> None:
        save_parallel(self.corpus, source_path, target_path)
        sidecar = {
            "provenance": self.provenance,
            "generator": self.generator,
            "n_docs": len(self.corpus),
            "n_sentences": self.corpus.n_sentences,
        }
        atomic_write_text(_sidecar(source_path), json.dumps(sidecar, sort_keys=True) + "\n")

    @classmethod
    def load(cls, source_path, target_path) -> "SyntheticCorpus":
        meta = json.loads(Path(_sidecar(source_path)).read_text(encoding="utf-8"))
        corpus = load_parallel(source_path, target_path, escape=False)
        return cls(corpus, meta["provenance"], meta["generator"])


def _sidecar(source_path) -> str:
    return f"{source_path}.provenance.json"


def backtranslate(
    reverse_model: DocTransformer,
    mono_docs: Sequence[Document],
    codec: TextCodec,
    level: str,
    beam: int = 5,
    generator: str = "",
    length_alpha: float = DEFAULT_ALPHA,
    context_kind: str = "2to1",
) -> SyntheticCorpus:
    """Pseudo source documents for target-side monolingual documents.

    ``level='sent'`` translates every sentence on its own; ``level='doc'`` gives
    the reverse model each sentence's previous sentence (DOCSTART for the first)
    as context (``context_kind='2to2'`` for reverse models that generate the
    previous sentence too). Document boundaries and sentence counts are preserved.
    """
    if level not in ("sent", "doc"):
        raise ValueError(f"level must be 'sent' or 'doc', got {level!r}")
    cfg = reverse_model.config
    if level == "doc" and not cfg.uses_context:
        raise ConfigError("document-level back-translation needs a context-aware reverse model")
    if context_kind not in ("2to1", "2to2"):
        raise ValueError("context_kind must be '2to1' or '2to2'")
    kind = "sent" if level == "sent" else context_kind
    pseudo = []
    for doc in mono_docs:
        samples = document_samples(doc, None, kind, codec)
        hyps = translate(reverse_model, samples, codec, beam, length_alpha)
        pseudo.append(Document(doc.id, tuple(h.text for h in hyps), None, doc.headline_index))
    corpus = ParallelDocumentCorpus(tuple(pseudo), tuple(mono_docs), {"provenance": f"{level}_bt"})
    return SyntheticCorpus(corpus, f"{level}_bt", generator)
