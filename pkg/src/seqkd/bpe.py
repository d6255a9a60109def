"""Byte pair encoding: learn merge tables, segment words, undo segmentation.

Words are learned as character sequences plus an end-of-word sentinel that
marks the boundary but is itself never merged; segmented output uses the
"@@" continuation-marker convention so that ``undo_bpe(apply_bpe(s)) == s``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import DataError

WORD_END = "</w>"
CONTINUE_MARKER = "@@"


@dataclass(frozen=True)
class MergeTable:
    """Ordered list of symbol-pair merges; order is learning priority."""

    merges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise DataError("duplicate merge pair in table")
        object.__setattr__(
            self, "_rank", {pair: i for i, pair in enumerate(self.merges)}
        )

    def __len__(self):
        return len(self.merges)

    def rank(self, pair):
        return self._rank.get(pair)


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word) + (WORD_END,)


def _pair_counts(word_freqs):
    counts = Counter()
    for symbols, freq in word_freqs.items():
        for pair in zip(symbols, symbols[1:]):
            if pair[1] == WORD_END:  # the boundary sentinel never merges
                continue
            counts[pair] += freq
    return counts


def _merge_word(symbols, pair, joined):
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(joined)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def learn_bpe(sentences, num_merges: int) -> MergeTable:
    """Learn up to ``num_merges`` merges from an iterable of token sequences.

    Each step merges the most frequent adjacent symbol pair within words;
    frequency ties break lexicographically on (left, right).  Learning stops
    early once no pair occurs at least twice.
    """
    word_counter = Counter()
    n_sentences = 0
    for sent in sentences:
        n_sentences += 1
        word_counter.update(sent)
    if n_sentences == 0:
        raise DataError("cannot learn BPE merges from an empty corpus")
    word_freqs = {_word_symbols(w): c for w, c in word_counter.items()}
    merges = []
    for _ in range(num_merges):
        counts = _pair_counts(word_freqs)
        if not counts:
            break
        best_pair = min(counts, key=lambda p: (-counts[p], p))
        if counts[best_pair] < 2:
            break
        merges.append(best_pair)
        joined = best_pair[0] + best_pair[1]
        word_freqs = {
            _merge_word(sym, best_pair, joined) if best_pair[0] in sym else sym: c
            for sym, c in word_freqs.items()
        }
    return MergeTable(tuple(merges))


def _segment_word(word: str, table: MergeTable) -> list[str]:
    symbols = list(_word_symbols(word))
    while len(symbols) > 1:
        ranked = [
            (rank, i)
            for i, pair in enumerate(zip(symbols, symbols[1:]))
            if (rank := table.rank(pair)) is not None
        ]
        if not ranked:
            break
        best_rank = min(r for r, _ in ranked)
        pair = table.merges[best_rank]
        symbols = list(_merge_word(tuple(symbols), pair, pair[0] + pair[1]))
    # convert sentinel form to @@ continuation markers
    if symbols[-1] == WORD_END:
        symbols.pop()
    elif symbols[-1].endswith(WORD_END):
        symbols[-1] = symbols[-1][: -len(WORD_END)]
    return [s + CONTINUE_MARKER for s in symbols[:-1]] + [symbols[-1]]


def apply_bpe(tokens, table: MergeTable) -> list[str]:
    """Segment each token into subwords, greedily applying the highest
    priority merge until none applies.  Deterministic per table."""
    cache = {}
    out = []
    for tok in tokens:
        if tok not in cache:
            cache[tok] = _segment_word(tok, table)
        out.extend(cache[tok])
    return out


def undo_bpe(tokens) -> list[str]:
    """Re-join continuation-marked subwords into full tokens."""
    out = []
    buf = ""
    for tok in tokens:
        if tok.endswith(CONTINUE_MARKER):
            buf += tok[: -len(CONTINUE_MARKER)]
        else:
            out.append(buf + tok)
            buf = ""
    if buf:
        raise DataError("dangling continuation marker at end of sentence")
    return out


def save_merge_table(table: MergeTable, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("#version:1\n")
        for left, right in table.merges:
            f.write(f"{left} {right}\n")


def load_merge_table(path) -> MergeTable:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != "#version:1":
            raise DataError(f"{path}: expected '#version:1' header, got {header!r}")
        merges = []
        for lineno, line in enumerate(f, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: malformed merge line {line!r}")
            merges.append((parts[0], parts[1]))
    return MergeTable(tuple(merges))
