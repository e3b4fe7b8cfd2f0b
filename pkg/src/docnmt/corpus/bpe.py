"""Byte pair encoding: greedy merge learning and segmentation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .documents import RESERVED_TOKENS, CorpusError, atomic_write_text

END_OF_WORD = "</w>"


@dataclass(frozen=True)
class BpeModel:
    merges: tuple[tuple[str, str], ...]
    end_of_word_marker: str = END_OF_WORD
    _ranks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        merges = tuple(tuple(m) for m in self.merges)
        object.__setattr__(self, "merges", merges)
        ranks = {}
        for i, pair in enumerate(merges):
            if pair in ranks:
                raise CorpusError(f"duplicate merge {pair}")
            ranks[pair] = i
        object.__setattr__(self, "_ranks", ranks)

    def save(self, path) -> None:
        atomic_write_text(path, "".join(f"{a}\t{b}\n" for a, b in self.merges))

    @classmethod
    def load(cls, path) -> "BpeModel":
        merges = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise CorpusError(f"{path}:{lineno}: expected 'left<TAB>right'")
                merges.append((parts[0], parts[1]))
        return cls(tuple(merges))

    def segment_word(self, word: str) -> list[str]:
        symbols = list(word[:-1]) + [word[-1] + self.end_of_word_marker]
        ranks = self._ranks
        while len(symbols) > 1:
            best = None
            best_rank = None
            for i in range(len(symbols) - 1):
                r = ranks.get((symbols[i], symbols[i + 1]))
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = i, r
            if best is None:
                break
            symbols[best:best + 2] = [symbols[best] + symbols[best + 1]]
        return symbols


def _word_symbols(word: str, marker: str) -> tuple[str, ...]:
    return tuple(word[:-1]) + (word[-1] + marker,)


def bpe_train(tokenized_corpus: Iterable[str | Sequence[str]], n_merges: int) -> BpeModel:
    """Learn ``n_merges`` merges from whitespace-tokenized sentences.

    Pairs are counted within words; the most frequent pair wins and ties go to
    the lexicographically smallest (left, right). Merges whose result would be
    a reserved token string are skipped.
    """
    if n_merges < 0:
        raise ValueError("n_merges must be >= 0")
    word_counts: Counter = Counter()
    for sent in tokenized_corpus:
        words = sent.split() if isinstance(sent, str) else list(sent)
        word_counts.update(words)
    if not word_counts:
        raise CorpusError("cannot train BPE on an empty corpus")

    vocab = {_word_symbols(w, END_OF_WORD): c for w, c in word_counts.items()}
    merges: list[tuple[str, str]] = []
    reserved = set(RESERVED_TOKENS)
    while len(merges) < n_merges:
        pairs: Counter = Counter()
        for symbols, c in vocab.items():
            for i in range(len(symbols) - 1):
                pairs[symbols[i], symbols[i + 1]] += c
        candidates = [(-c, p) for p, c in pairs.items() if p[0] + p[1] not in reserved]
        if not candidates:
            break
        _, best = min(candidates)
        merges.append(best)
        merged = best[0] + best[1]
        new_vocab = {}
        for symbols, c in vocab.items():
            if len(symbols) > 1:
                out = []
                i = 0
                while i < len(symbols):
                    if i < len(symbols) - 1 and symbols[i] == best[0] and symbols[i + 1] == best[1]:
                        out.append(merged)
                        i += 2
                    else:
                        out.append(symbols[i])
                        i += 1
                symbols = tuple(out)
            new_vocab[symbols] = new_vocab.get(symbols, 0) + c
        vocab = new_vocab
    return BpeModel(tuple(merges))


def bpe_apply(model: BpeModel, sentence: str) -> list[str]:
    out: list[str] = []
    for word in sentence.split():
        out.extend(model.segment_word(word))
    return out


def bpe_decode(tokens: Sequence[str], marker: str = END_OF_WORD) -> str:
    words = []
    current = []
    for tok in tokens:
        if tok.endswith(marker):
            current.append(tok[: -len(marker)])
            words.append("".join(current))
            current = []
        else:
            current.append(tok)
    if current:
        words.append("".join(current))
    return " ".join(words)
