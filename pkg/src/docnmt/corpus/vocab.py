"""Token/id vocabulary and the text <-> id codec built on BPE."""

from __future__ import annotations

import hashlib
from collections import Counter
from typing import Iterable, Sequence

from .bpe import BpeModel, bpe_apply, bpe_decode
from .documents import (
    BOS,
    BREAK,
    DOCSTART,
    EOS,
    MASK,
    PAD,
    RESERVED_TOKENS,
    UNK,
    CorpusError,
    atomic_write_text,
    unescape_sentence,
)

PAD_ID, UNK_ID, BOS_ID, EOS_ID, BREAK_ID, DOCSTART_ID, MASK_ID = range(len(RESERVED_TOKENS))


class Vocab:
    """Dense bidirectional map; reserved tokens occupy ids 0..6."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._itos: list[str] = list(RESERVED_TOKENS)
        self._stoi: dict[str, int] = {t: i for i, t in enumerate(self._itos)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token in self._stoi:
            return self._stoi[token]
        self._stoi[token] = len(self._itos)
        self._itos.append(token)
        return self._stoi[token]

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._itos == other._itos

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self._stoi.get(t, UNK_ID) for t in tokens]

    def tokens(self, ids: Sequence[int]) -> list[str]:
        return [self._itos[i] for i in ids]

    @property
    def pad_id(self) -> int:
        return PAD_ID

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self._itos).encode("utf-8")).hexdigest()[:16]

    def save(self, path) -> None:
        atomic_write_text(path, "".join(t + "\n" for t in self._itos))

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tuple(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise CorpusError(f"{path}: reserved tokens missing or out of order")
        return cls(tokens[len(RESERVED_TOKENS):])

    @classmethod
    def build(cls, token_stream: Iterable[Sequence[str]], min_count: int = 1) -> "Vocab":
        counts: Counter = Counter()
        for toks in token_stream:
            counts.update(toks)
        ordered = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        return cls(t for t in ordered if t not in RESERVED_TOKENS)


class TextCodec:
    """Sentence <-> id conversion: BPE segmentation followed by vocabulary lookup."""

    def __init__(self, bpe: BpeModel, vocab: Vocab):
        self.bpe = bpe
        self.vocab = vocab

    def encode(self, sentence: str) -> list[int]:
        return self.vocab.ids(bpe_apply(self.bpe, sentence))

    def decode(self, ids: Sequence[int], unescape: bool = False) -> str:
        pieces = [self.vocab.token(i) for i in ids if i not in (PAD_ID, BOS_ID, EOS_ID)]
        words = []
        chunk: list[str] = []
        for p in pieces:
            if p in (BREAK, DOCSTART, MASK, UNK):
                if chunk:
                    words.append(bpe_decode(chunk, self.bpe.end_of_word_marker))
                    chunk = []
                words.append(p)
            else:
                chunk.append(p)
        if chunk:
            words.append(bpe_decode(chunk, self.bpe.end_of_word_marker))
        text = " ".join(w for w in words if w)
        return unescape_sentence(text) if unescape else text

    @classmethod
    def train(cls, sentences: Sequence[str], n_merges: int) -> "TextCodec":
        from .bpe import bpe_train

        bpe = bpe_train(sentences, n_merges)
        vocab = Vocab.build(bpe_apply(bpe, s) for s in sentences)
        return cls(bpe, vocab)


__all__ = [
    "BOS",
    "BOS_ID",
    "BREAK",
    "BREAK_ID",
    "DOCSTART",
    "DOCSTART_ID",
    "EOS",
    "EOS_ID",
    "MASK",
    "MASK_ID",
    "PAD",
    "PAD_ID",
    "UNK",
    "UNK_ID",
    "TextCodec",
    "Vocab",
]
