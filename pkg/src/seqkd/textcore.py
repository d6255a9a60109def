"""Tokenized text plumbing: vocabulary, parallel corpus I/O, epoch shuffling.

Tokenization at this layer is whitespace-only; subword segmentation lives in
:mod:`seqkd.bpe`.  All types are immutable after construction and safe to
share across workers.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
RESERVED_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")


@dataclass(frozen=True)
class Vocab:
    """Bijective token <-> dense-id map with the four reserved tokens fixed."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ConfigError("vocabulary must start with the reserved tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigError("duplicate token in vocabulary")
        object.__setattr__(
            self, "_ids", {tok: i for i, tok in enumerate(self.tokens)}
        )

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode(self, tokens) -> tuple[int, ...]:
        """Map token strings to ids; out-of-vocabulary tokens become <unk>."""
        ids = self._ids
        return tuple(ids.get(t, UNK_ID) for t in tokens)

    def decode(self, ids) -> list[str]:
        """Map ids back to token strings; ids outside the table are corrupt."""
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise DataError(f"token id {i} outside vocabulary of size {len(self.tokens)}")
            out.append(self.tokens[i])
        return out


def build_vocab(sentences, max_size: int) -> Vocab:
    """Build a vocabulary from an iterable of token-string sequences.

    Keeps the ``max_size - 4`` most frequent tokens after the reserved four;
    frequency ties break lexicographically so construction is deterministic
    and independent of sentence order.
    """
    if max_size < 5:
        raise ConfigError(f"max_size must be at least 5, got {max_size}")
    counts = Counter()
    n_sentences = 0
    for sent in sentences:
        n_sentences += 1
        counts.update(sent)
    if n_sentences == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: max_size - len(RESERVED_TOKENS)]]
    return Vocab(RESERVED_TOKENS + tuple(kept))


def save_vocab(vocab: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for tok in vocab.tokens:
            f.write(tok + "\n")


def load_vocab(path) -> Vocab:
    with open(path, "r", encoding="utf-8") as f:
        tokens = tuple(line.rstrip("\n") for line in f)
    if len(tokens) < len(RESERVED_TOKENS):
        raise DataError(f"vocabulary file {path} too short")
    return Vocab(tokens)


@dataclass(frozen=True)
class ParallelCorpus:
    """Aligned (pair_id, source, target) triples.

    Sentences are tuples of whitespace tokens (str) before encoding and
    tuples of vocabulary ids (int) after; the container is agnostic.
    """

    pairs: tuple

    def __post_init__(self):
        ids = [p[0] for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise DataError("pair ids must be unique")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def sources(self):
        return [p[1] for p in self.pairs]

    def targets(self):
        return [p[2] for p in self.pairs]


def _read_lines(path):
    with open(path, "rb") as f:
        raw = f.read()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    out = []
    for i, line in enumerate(lines):
        try:
            out.append(line.decode("utf-8"))
        except UnicodeDecodeError as e:
            raise DataError(f"{path}: undecodable bytes on line {i + 1}: {e}") from e
    return out


def read_tokens(path) -> list[tuple[str, ...]]:
    """One whitespace-tokenized sentence per line."""
    return [tuple(line.split()) for line in _read_lines(path)]


def read_parallel(source_path, target_path) -> ParallelCorpus:
    """Read two positionally aligned one-sentence-per-line text files."""
    src_lines = _read_lines(source_path)
    tgt_lines = _read_lines(target_path)
    if len(src_lines) != len(tgt_lines):
        raise DataError(
            f"line count mismatch: {source_path} has {len(src_lines)} lines, "
            f"{target_path} has {len(tgt_lines)}"
        )
    pairs = tuple(
        (i, tuple(s.split()), tuple(t.split()))
        for i, (s, t) in enumerate(zip(src_lines, tgt_lines))
    )
    return ParallelCorpus(pairs)


def write_parallel(corpus: ParallelCorpus, source_path, target_path) -> None:
    with open(source_path, "w", encoding="utf-8") as fs, open(
        target_path, "w", encoding="utf-8"
    ) as ft:
        for _, src, tgt in corpus:
            fs.write(" ".join(src) + "\n")
            ft.write(" ".join(tgt) + "\n")


def encode_corpus(corpus: ParallelCorpus, src_vocab: Vocab, tgt_vocab: Vocab) -> ParallelCorpus:
    return ParallelCorpus(
        tuple(
            (pid, src_vocab.encode(src), tgt_vocab.encode(tgt))
            for pid, src, tgt in corpus
        )
    )


def decode_corpus(corpus: ParallelCorpus, src_vocab: Vocab, tgt_vocab: Vocab) -> ParallelCorpus:
    return ParallelCorpus(
        tuple(
            (pid, tuple(src_vocab.decode(src)), tuple(tgt_vocab.decode(tgt)))
            for pid, src, tgt in corpus
        )
    )


def shuffle_order(n: int, epoch: int, seed: int) -> np.ndarray:
    """Deterministic permutation of ``0..n-1`` keyed by (seed, epoch).

    Uses a counter-based generator so per-epoch shuffles are reproducible
    without carrying generator state between epochs.
    """
    if n < 0:
        raise ConfigError(f"corpus size must be non-negative, got {n}")
    key = np.array([seed % 2**64, epoch % 2**64], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.permutation(n)
