"""Construction of per-sentence training/inference samples with document context."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .documents import CorpusError, Document, ParallelDocumentCorpus, read_jsonl, write_jsonl
from .vocab import BREAK_ID, DOCSTART_ID, TextCodec

SAMPLE_KINDS = ("sent", "2to1", "3to1", "2to2", "title")


@dataclass(frozen=True)
class ContextSample:
    src_current: tuple[int, ...]
    src_context: tuple[int, ...]
    tgt_current: tuple[int, ...]
    tgt_context: tuple[int, ...] | None
    kind: str
    doc_id: str
    sent_index: int

    def __post_init__(self):
        for name in ("src_current", "src_context", "tgt_current"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        if self.tgt_context is not None:
            object.__setattr__(self, "tgt_context", tuple(int(i) for i in self.tgt_context))
        if self.kind not in SAMPLE_KINDS:
            raise CorpusError(f"unknown sample kind {self.kind!r}")
        if self.kind == "2to2" and self.tgt_context is None:
            raise CorpusError("2to2 sample without target context")
        if self.kind == "sent" and self.src_context:
            raise CorpusError("sentence-level sample with non-empty context")

    def to_json(self) -> dict:
        return {
            "doc": self.doc_id,
            "index": self.sent_index,
            "kind": self.kind,
            "src": list(self.src_current),
            "ctx": list(self.src_context),
            "tgt": list(self.tgt_current),
            "tgt_ctx": None if self.tgt_context is None else list(self.tgt_context),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ContextSample":
        return cls(
            src_current=obj["src"],
            src_context=obj["ctx"],
            tgt_current=obj["tgt"],
            tgt_context=obj.get("tgt_ctx"),
            kind=obj["kind"],
            doc_id=obj["doc"],
            sent_index=obj["index"],
        )


def _join(parts: Sequence[Sequence[int]]) -> tuple[int, ...]:
    out: list[int] = []
    for i, p in enumerate(parts):
        if i:
            out.append(BREAK_ID)
        out.extend(p)
    return tuple(out)


def previous_context(encoded: Sequence[Sequence[int]], index: int, n_prev: int) -> tuple[int, ...]:
    """Previous ``n_prev`` sentences joined by BREAK, or DOCSTART at document start."""
    if index == 0:
        return (DOCSTART_ID,)
    return _join(encoded[max(0, index - n_prev):index])


def document_samples(
    src_doc: Document,
    tgt_doc: Document | None,
    kind: str,
    codec: TextCodec,
) -> list[ContextSample]:
    if kind not in SAMPLE_KINDS:
        raise CorpusError(f"unknown sample kind {kind!r}")
    src = [codec.encode(s) for s in src_doc.sentences]
    tgt = [codec.encode(s) for s in tgt_doc.sentences] if tgt_doc is not None else [()] * len(src)
    title_ids: tuple[int, ...] = ()
    if kind == "title":
        if not src_doc.title:
            raise CorpusError(f"document {src_doc.id!r} has no title for title-context samples")
        title_ids = tuple(codec.encode(src_doc.title))
    out = []
    for i in range(len(src)):
        tgt_ctx = None
        if kind == "sent":
            ctx: tuple[int, ...] = ()
        elif kind == "2to1":
            ctx = previous_context(src, i, 1)
        elif kind == "3to1":
            ctx = previous_context(src, i, 2)
        elif kind == "2to2":
            ctx = previous_context(src, i, 1)
            tgt_ctx = previous_context(tgt, i, 1)
        else:
            ctx = title_ids
        out.append(ContextSample(tuple(src[i]), ctx, tuple(tgt[i]), tgt_ctx, kind, src_doc.id, i))
    return out


def build_context_samples(
    corpus: ParallelDocumentCorpus, kind: str, codec: TextCodec
) -> list[ContextSample]:
    """One sample per (document, sentence); context never crosses documents."""
    samples: list[ContextSample] = []
    for src_doc, tgt_doc in corpus.pairs():
        samples.extend(document_samples(src_doc, tgt_doc, kind, codec))
    return samples


def save_samples(path, samples: Sequence[ContextSample]) -> None:
    write_jsonl(path, (s.to_json() for s in samples))


def load_samples(path) -> list[ContextSample]:
    return [ContextSample.from_json(r) for r in read_jsonl(path)]
