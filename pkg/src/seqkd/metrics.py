"""Translation quality metrics: smoothed sentence BLEU, corpus BLEU-4, TER.

All functions compare token sequences exactly (case-sensitive ids or
strings); there is no tokenization or casing logic here.  Everything is a
pure function and safe to call concurrently.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import DataError

MAX_ORDER = 4

# TER block shifts: spans longer than this are never moved.
MAX_SHIFT_SIZE = 10


def ngram_counts(tokens, n: int) -> Counter:
    """Multiset of contiguous n-grams; empty when the sentence is shorter than n."""
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class SentenceBleuBreakdown:
    matched: tuple[int, int, int, int]
    total: tuple[int, int, int, int]
    bp: float
    score: float


def sentence_bleu(hyp, ref) -> SentenceBleuBreakdown:
    """Add-one smoothed sentence-level BLEU-4 against a single reference.

    One is added to both the matched and the total n-gram counts at every
    order 1..4, so orders the hypothesis is too short for contribute a
    factor of exactly 1.  An empty hypothesis scores 0.
    """
    if len(ref) == 0:
        raise DataError("sentence BLEU is undefined for an empty reference")
    matched, total = [], []
    for n in range(1, MAX_ORDER + 1):
        hyp_counts = ngram_counts(hyp, n)
        ref_counts = ngram_counts(ref, n)
        m = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        t = sum(hyp_counts.values())
        matched.append(m)
        total.append(t)
    if len(hyp) == 0:
        return SentenceBleuBreakdown((0, 0, 0, 0), (0, 0, 0, 0), 0.0, 0.0)
    bp = min(1.0, math.exp(1.0 - len(ref) / len(hyp)))
    log_prec = sum(math.log((m + 1) / (t + 1)) for m, t in zip(matched, total))
    score = bp * math.exp(log_prec / MAX_ORDER)
    return SentenceBleuBreakdown(tuple(matched), tuple(total), bp, score)


@dataclass(frozen=True)
class CorpusBleuStats:
    matched: tuple[int, int, int, int]
    total: tuple[int, int, int, int]
    hyp_len: int
    ref_len: int
    score: float


def corpus_bleu(hyps, refs) -> CorpusBleuStats:
    """Standard unsmoothed corpus BLEU-4 over micro-aggregated counts."""
    if len(hyps) != len(refs):
        raise DataError(f"corpus BLEU needs aligned lists, got {len(hyps)} vs {len(refs)}")
    if not any(len(r) > 0 for r in refs):
        raise DataError("corpus BLEU needs at least one non-empty reference")
    matched = [0] * MAX_ORDER
    total = [0] * MAX_ORDER
    hyp_len = sum(len(h) for h in hyps)
    ref_len = sum(len(r) for r in refs)
    for hyp, ref in zip(hyps, refs):
        for n in range(1, MAX_ORDER + 1):
            hyp_counts = ngram_counts(hyp, n)
            ref_counts = ngram_counts(ref, n)
            matched[n - 1] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
            total[n - 1] += sum(hyp_counts.values())
    if hyp_len == 0 or any(m == 0 for m in matched):
        score = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
        score = bp * math.exp(
            sum(math.log(m / t) for m, t in zip(matched, total)) / MAX_ORDER
        )
    return CorpusBleuStats(tuple(matched), tuple(total), hyp_len, ref_len, score)


def edit_distance(a, b) -> int:
    """Word-level Levenshtein distance with unit costs."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        ai = a[i - 1]
        for j in range(1, lb + 1):
            cur[j] = min(
                prev[j - 1] + (ai != b[j - 1]),
                prev[j] + 1,
                cur[j - 1] + 1,
            )
        prev = cur
    return prev[lb]


def _edit_trace(hyp, ref):
    """Levenshtein alignment components (insertions, deletions, substitutions).

    Insertions add reference words missing from the hypothesis; deletions
    remove hypothesis words.  On cost ties the traceback prefers
    match/substitution, then deletion, then insertion, so the decomposition
    is deterministic.
    """
    lh, lr = len(hyp), len(ref)
    d = [[0] * (lr + 1) for _ in range(lh + 1)]
    for i in range(1, lh + 1):
        d[i][0] = i
    for j in range(1, lr + 1):
        d[0][j] = j
    for i in range(1, lh + 1):
        hi = hyp[i - 1]
        row, prev_row = d[i], d[i - 1]
        for j in range(1, lr + 1):
            row[j] = min(
                prev_row[j - 1] + (hi != ref[j - 1]),
                prev_row[j] + 1,
                row[j - 1] + 1,
            )
    ins = dels = subs = 0
    i, j = lh, lr
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (hyp[i - 1] != ref[j - 1]):
            if hyp[i - 1] != ref[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return ins, dels, subs


def _ref_span_lengths(ref):
    spans = {}
    max_len = min(len(ref), MAX_SHIFT_SIZE)
    for n in range(1, max_len + 1):
        spans[n] = set(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
    return spans


def _best_shift(hyp, ref, ref_spans, current_dist):
    """Most-improving block shift of hyp, or None when no shift reduces edits.

    A shift removes the span hyp[i:i+n] (which must exactly match some
    reference span) and reinserts it at position k of the remainder.  Ties
    between equally improving shifts break by (span start, span length,
    destination), smallest first.
    """
    best = None  # (new_dist, i, n, k, shifted)
    lh = len(hyp)
    for i in range(lh):
        for n in range(1, min(MAX_SHIFT_SIZE, lh - i) + 1):
            span = tuple(hyp[i : i + n])
            if span not in ref_spans.get(n, ()):
                continue
            rest = hyp[:i] + hyp[i + n :]
            for k in range(len(rest) + 1):
                if k == i:
                    continue
                shifted = rest[:k] + list(span) + rest[k:]
                dist = edit_distance(shifted, ref)
                if dist >= current_dist:
                    continue
                key = (dist, i, n, k)
                if best is None or key < best[0]:
                    best = (key, shifted)
    if best is None:
        return None
    return best[1]


@dataclass(frozen=True)
class TerResult:
    insertions: int
    deletions: int
    substitutions: int
    shifts: int
    ref_length: int
    score: float

    @property
    def edits(self) -> int:
        return self.insertions + self.deletions + self.substitutions + self.shifts


def ter(hyp, ref) -> TerResult:
    """Translation edit rate with greedy block shifts.

    Repeatedly applies the shift that most reduces the word-level edit
    distance (each shift costs one edit) and stops when no shift strictly
    reduces it; the score is (remaining edits + shifts) / |ref|.
    """
    if len(ref) == 0:
        raise DataError("TER is undefined for an empty reference")
    current = list(hyp)
    ref = list(ref)
    ref_spans = _ref_span_lengths(ref)
    dist = edit_distance(current, ref)
    shifts = 0
    while dist > 0:
        shifted = _best_shift(current, ref, ref_spans, dist)
        if shifted is None:
            break
        current = shifted
        dist = edit_distance(current, ref)
        shifts += 1
    ins, dels, subs = _edit_trace(current, ref)
    score = (ins + dels + subs + shifts) / len(ref)
    return TerResult(ins, dels, subs, shifts, len(ref), score)


def corpus_ter(hyps, refs) -> float:
    """Corpus-level TER: total edits over total reference length."""
    if len(hyps) != len(refs):
        raise DataError(f"corpus TER needs aligned lists, got {len(hyps)} vs {len(refs)}")
    edits = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        r = ter(hyp, ref)
        edits += r.edits
        ref_len += r.ref_length
    if ref_len == 0:
        raise DataError("corpus TER needs at least one non-empty reference")
    return edits / ref_len
