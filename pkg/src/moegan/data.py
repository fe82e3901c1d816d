"""Text corpus and vocabulary files.

Corpus: UTF-8, one sentence per line, whitespace-separated tokens.
Vocabulary: one token per line; the line index is the id. Ids 0-3 are
reserved for ``<pad>``, ``<s>``, ``</s>`` and ``<unk>``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

RESERVED = ("<pad>", "<s>", "</s>", "<unk>")


class DataError(ValueError):
    pass


class Vocab:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        if not self.tokens:
            raise DataError("empty vocabulary")
        self.index = {}
        for i, tok in enumerate(self.tokens):
            if not tok or any(c.isspace() for c in tok):
                raise DataError(f"vocabulary line {i + 1}: token must be non-empty without whitespace")
            if tok in self.index:
                raise DataError(f"vocabulary line {i + 1}: duplicate token {tok!r}")
            self.index[tok] = i
        n = min(len(self.tokens), len(RESERVED))
        if tuple(self.tokens[:n]) != RESERVED[:n]:
            raise DataError(f"vocabulary must start with the reserved tokens {', '.join(RESERVED)}")

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def synthetic(cls, size: int) -> Vocab:
        """Reserved tokens followed by ``t4 .. t{size-1}``."""
        if size < 1:
            raise DataError("vocabulary size must be >= 1")
        return cls(list(RESERVED[:size]) + [f"t{i}" for i in range(len(RESERVED), size)])

    def encode(self, tokens, line: int | None = None) -> list[int]:
        out = []
        for tok in tokens:
            try:
                out.append(self.index[tok])
            except KeyError:
                where = f" on line {line}" if line is not None else ""
                raise DataError(f"token {tok!r}{where} is not in the vocabulary") from None
        return out

    def decode(self, ids) -> list[str]:
        try:
            return [self.tokens[int(i)] for i in ids]
        except IndexError:
            raise DataError(f"token id outside vocabulary of size {len(self)}") from None

    def text(self) -> str:
        return "".join(t + "\n" for t in self.tokens)


def read_vocab(path) -> Vocab:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return Vocab(line.strip() for line in lines if line.strip())


def write_vocab(path, vocab: Vocab) -> None:
    Path(path).write_text(vocab.text(), encoding="utf-8")


def read_corpus(path, vocab: Vocab) -> np.ndarray:
    """Token ids as an ``(n, L)`` array; every sentence must have the same length."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        rows.append(vocab.encode(tokens, lineno))
        if len(rows[-1]) != len(rows[0]):
            raise DataError(f"{path}: line {lineno} has {len(rows[-1])} tokens, expected {len(rows[0])}")
    if not rows:
        raise DataError(f"{path}: empty corpus")
    return np.asarray(rows, dtype=np.int64)


def corpus_text(corpus, vocab: Vocab) -> str:
    return "".join(" ".join(vocab.decode(row)) + "\n" for row in np.asarray(corpus))


def write_corpus(path, corpus, vocab: Vocab) -> None:
    Path(path).write_text(corpus_text(corpus, vocab), encoding="utf-8")
