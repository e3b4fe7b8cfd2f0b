"""Contrastive test instances, coreference annotations and word alignments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .documents import CorpusError, Document, atomic_write_text, read_jsonl, write_jsonl


@dataclass(frozen=True)
class ContrastiveInstance:
    context_sentences: tuple[str, ...]
    source: str
    correct: str
    contrastive: tuple[str, ...]
    pronoun_label: str | None = None
    # Target-side translation of the context, used by models that generate it.
    context_target: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "context_sentences", tuple(self.context_sentences))
        object.__setattr__(self, "contrastive", tuple(self.contrastive))
        if self.context_target is not None:
            object.__setattr__(self, "context_target", tuple(self.context_target))
        if not self.contrastive:
            raise CorpusError("contrastive instance needs at least one incorrect candidate")
        if self.correct in self.contrastive:
            raise CorpusError("correct translation listed among the contrastive candidates")

    def to_json(self) -> dict:
        out = {
            "ctx_src": list(self.context_sentences),
            "src": self.source,
            "correct": self.correct,
            "contrastive": list(self.contrastive),
        }
        if self.pronoun_label is not None:
            out["label"] = self.pronoun_label
        if self.context_target is not None:
            out["ctx_tgt"] = list(self.context_target)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ContrastiveInstance":
        try:
            return cls(
                tuple(obj["ctx_src"]),
                obj["src"],
                obj["correct"],
                tuple(obj["contrastive"]),
                obj.get("label"),
                tuple(obj["ctx_tgt"]) if obj.get("ctx_tgt") is not None else None,
            )
        except KeyError as exc:
            raise CorpusError(f"contrastive record missing field {exc}") from None


def load_contrastive(path) -> list[ContrastiveInstance]:
    return [ContrastiveInstance.from_json(r) for r in read_jsonl(path)]


def save_contrastive(path, instances: Sequence[ContrastiveInstance]) -> None:
    write_jsonl(path, (i.to_json() for i in instances))


Mention = tuple[int, tuple[int, int]]


@dataclass(frozen=True)
class CorefAnnotation:
    """Mention pairs (antecedent, anaphor); spans are half-open token ranges."""

    doc_id: str
    pairs: tuple[tuple[Mention, Mention], ...]

    def check_bounds(self, doc: Document) -> None:
        for pair in self.pairs:
            for sent, (a, b) in pair:
                if not 0 <= sent < len(doc):
                    raise CorpusError(f"{self.doc_id}: sentence {sent} out of range")
                n = len(doc.sentences[sent].split())
                if not 0 <= a < b <= n:
                    raise CorpusError(f"{self.doc_id}: span [{a},{b}) out of range for sentence {sent}")

    def to_json(self) -> dict:
        return {
            "doc": self.doc_id,
            "pairs": [[[s, [a, b]] for s, (a, b) in pair] for pair in self.pairs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorefAnnotation":
        raw = obj["pairs"]
        # A bare [[i,[a,b]],[j,[c,d]]] is a single pair.
        if raw and isinstance(raw[0][0], int):
            raw = [raw]
        pairs = []
        for pair in raw:
            if len(pair) != 2:
                raise CorpusError(f"{obj['doc']}: a mention pair needs exactly two mentions")
            pairs.append(tuple((int(s), (int(span[0]), int(span[1]))) for s, span in pair))
        return cls(str(obj["doc"]), tuple(pairs))


def load_coref(path) -> list[CorefAnnotation]:
    return [CorefAnnotation.from_json(r) for r in read_jsonl(path)]


def save_coref(path, annotations: Sequence[CorefAnnotation]) -> None:
    write_jsonl(path, (a.to_json() for a in annotations))


def filter_intersentential(
    annotations: Sequence[CorefAnnotation],
    window: int = 1,
    documents: Sequence[Document] | None = None,
) -> list[tuple[str, int, int]]:
    """Keep (doc, antecedent sentence, anaphor sentence) where the anaphor's nearest
    antecedent lies in a strictly earlier sentence at most ``window`` back."""
    if window < 1:
        raise ValueError("window must be >= 1")
    by_id = {d.id: d for d in documents} if documents is not None else {}
    kept: list[tuple[str, int, int]] = []
    for ann in annotations:
        if documents is not None:
            if ann.doc_id not in by_id:
                raise CorpusError(f"annotation for unknown document {ann.doc_id!r}")
            ann.check_bounds(by_id[ann.doc_id])
        for (_, sa), (_, sb) in ann.pairs:
            if sa[0] >= sa[1] or sb[0] >= sb[1] or min(sa[0], sb[0]) < 0:
                raise CorpusError(f"{ann.doc_id}: empty or negative span")
        nearest: dict[Mention, Mention] = {}
        for ante, ana in ann.pairs:
            if (ante[0], ante[1][0]) >= (ana[0], ana[1][0]):
                continue  # not an antecedent of this anaphor
            prev = nearest.get(ana)
            if prev is None or (ante[0], ante[1][0]) > (prev[0], prev[1][0]):
                nearest[ana] = ante
        for ana, ante in nearest.items():
            if ana[0] - window <= ante[0] < ana[0]:
                item = (ann.doc_id, ante[0], ana[0])
                if item not in kept:
                    kept.append(item)
    return kept


Alignment = list[tuple[int, int]]


def parse_alignment_line(line: str) -> Alignment:
    pairs = []
    for tok in line.split():
        try:
            i, j = tok.split("-")
            pairs.append((int(i), int(j)))
        except ValueError:
            raise CorpusError(f"bad alignment token {tok!r}") from None
    return pairs


def load_alignments(path) -> list[Alignment]:
    with open(path, encoding="utf-8") as fh:
        return [parse_alignment_line(line) for line in fh.read().splitlines()]


def save_alignments(path, alignments: Sequence[Alignment]) -> None:
    atomic_write_text(path, "".join(" ".join(f"{i}-{j}" for i, j in a) + "\n" for a in alignments))
