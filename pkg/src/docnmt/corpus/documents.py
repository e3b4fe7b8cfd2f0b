"""Documents, parallel document corpora and their JSONL representation."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, BOS, EOS, BREAK, DOCSTART, MASK = (
    "<pad>",
    "<unk>",
    "<s>",
    "</s>",
    "<break>",
    "<docstart>",
    "<mask>",
)
RESERVED_TOKENS = (PAD, UNK, BOS, EOS, BREAK, DOCSTART, MASK)
ESCAPE = "\\"


class CorpusError(ValueError):
    """Malformed or misaligned corpus data."""


def _is_escaped_reserved(token: str) -> bool:
    return token.lstrip(ESCAPE) in RESERVED_TOKENS


def escape_token(token: str) -> str:
    """Prefix literal reserved strings (and already-escaped ones) with one more escape."""
    return ESCAPE + token if _is_escaped_reserved(token) else token


def unescape_token(token: str) -> str:
    if token.startswith(ESCAPE) and _is_escaped_reserved(token):
        return token[len(ESCAPE):]
    return token


def escape_sentence(sentence: str) -> str:
    return " ".join(escape_token(t) for t in sentence.split())


def unescape_sentence(sentence: str) -> str:
    return " ".join(unescape_token(t) for t in sentence.split())


def tokenize(sentence: str, mode: str = "word") -> list[str]:
    if mode == "word":
        return sentence.split()
    if mode == "char":
        return [c for c in sentence if not c.isspace()]
    raise ValueError(f"unknown tokenization mode {mode!r}")


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple[str, ...]
    title: str | None = None
    headline_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise CorpusError(f"document {self.id!r} has no sentences")
        if self.headline_index is not None and not 0 <= self.headline_index < len(self.sentences):
            raise CorpusError(f"document {self.id!r}: headline_index out of range")

    def __len__(self) -> int:
        return len(self.sentences)

    def to_json(self) -> dict:
        out: dict = {"id": self.id, "sentences": list(self.sentences)}
        if self.title is not None:
            out["title"] = self.title
        if self.headline_index is not None:
            out["headline_index"] = self.headline_index
        return out

    @classmethod
    def from_json(cls, obj: dict, escape: bool = True) -> "Document":
        try:
            sentences = obj["sentences"]
            doc_id = str(obj["id"])
        except KeyError as exc:
            raise CorpusError(f"document record missing field {exc}") from None
        title = obj.get("title")
        if escape:
            sentences = [escape_sentence(s) for s in sentences]
            title = escape_sentence(title) if title is not None else None
        return cls(doc_id, tuple(sentences), title, obj.get("headline_index"))


def _check_unique(docs: Sequence[Document]) -> None:
    seen = set()
    for d in docs:
        if d.id in seen:
            raise CorpusError(f"duplicate document id {d.id!r}")
        seen.add(d.id)


@dataclass(frozen=True)
class ParallelDocumentCorpus:
    source_docs: tuple[Document, ...]
    target_docs: tuple[Document, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "source_docs", tuple(self.source_docs))
        object.__setattr__(self, "target_docs", tuple(self.target_docs))
        validate_alignment(self.source_docs, self.target_docs)

    def __len__(self) -> int:
        return len(self.source_docs)

    def pairs(self) -> Iterable[tuple[Document, Document]]:
        return zip(self.source_docs, self.target_docs)

    @property
    def n_sentences(self) -> int:
        return sum(len(d) for d in self.source_docs)

    def reversed(self) -> "ParallelDocumentCorpus":
        return ParallelDocumentCorpus(self.target_docs, self.source_docs, dict(self.meta))

    def concat(self, other: "ParallelDocumentCorpus") -> "ParallelDocumentCorpus":
        return ParallelDocumentCorpus(
            self.source_docs + other.source_docs, self.target_docs + other.target_docs
        )


def validate_alignment(source_docs: Sequence[Document], target_docs: Sequence[Document]) -> None:
    if len(source_docs) != len(target_docs):
        raise CorpusError(
            f"document count mismatch: {len(source_docs)} source vs {len(target_docs)} target"
        )
    _check_unique(source_docs)
    _check_unique(target_docs)
    for s, t in zip(source_docs, target_docs):
        if len(s) != len(t):
            raise CorpusError(
                f"document {s.id!r}/{t.id!r}: {len(s)} source vs {len(t)} target sentences"
            )


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, records: Iterable[dict]) -> None:
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return out


def load_documents(path, escape: bool = True) -> list[Document]:
    docs = [Document.from_json(r, escape=escape) for r in read_jsonl(path)]
    _check_unique(docs)
    return docs


def save_documents(path, docs: Sequence[Document]) -> None:
    write_jsonl(path, (d.to_json() for d in docs))


def load_parallel(source_path, target_path, escape: bool = True) -> ParallelDocumentCorpus:
    return ParallelDocumentCorpus(
        load_documents(source_path, escape=escape), load_documents(target_path, escape=escape)
    )


def save_parallel(corpus: ParallelDocumentCorpus, source_path, target_path) -> None:
    save_documents(source_path, corpus.source_docs)
    save_documents(target_path, corpus.target_docs)


def corpus_stats(docs: Sequence[Document] | ParallelDocumentCorpus, side: str = "source"):
    """Return (sentences, running words, rounded average sentence length).

    Counts whitespace tokens of the sentences only; titles are not counted.
    """
    if isinstance(docs, ParallelDocumentCorpus):
        docs = docs.source_docs if side == "source" else docs.target_docs
    n_sent = 0
    n_words = 0
    for d in docs:
        for s in d.sentences:
            n_sent += 1
            n_words += len(s.split())
    avg = int(round(n_words / n_sent)) if n_sent else 0
    return n_sent, n_words, avg


def split_headline_body(docs: Sequence[Document] | ParallelDocumentCorpus):
    """Partition (doc_id, sentence_index) pairs into headlines and body sentences."""
    if isinstance(docs, ParallelDocumentCorpus):
        docs = docs.source_docs
    headlines: list[tuple[str, int]] = []
    body: list[tuple[str, int]] = []
    for d in docs:
        h = 0 if d.headline_index is None else d.headline_index
        for i in range(len(d)):
            (headlines if i == h else body).append((d.id, i))
    return headlines, body
