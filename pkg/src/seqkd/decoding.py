"""Beam search decoding with single-model and ensemble scoring.

Ensembles combine members by arithmetic-averaging next-token probabilities
(not log probabilities) at every step.  Final candidates can be picked by
highest cumulative log probability or, when a reference is available, by
highest smoothed sentence BLEU.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .metrics import sentence_bleu
from .model import DecoderSession, ModelParams, PackedModel
from .textcore import BOS_ID, EOS_ID

MAX_LOGPROB = "max_logprob"
ORACLE_BLEU = "oracle_bleu"


@dataclass(frozen=True)
class Hypothesis:
    """A finished or partial translation; tokens never include <s> or </s>."""

    tokens: tuple[int, ...]
    logprob: float
    finished: bool


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 5
    max_len: int | None = None  # None: max_len_factor * |source| + max_len_extra
    max_len_factor: float = 2.0
    max_len_extra: int = 5
    selection: str = MAX_LOGPROB
    length_normalize: bool = False

    def __post_init__(self):
        if self.beam_size < 1:
            raise ConfigError("beam_size must be at least 1")
        if self.max_len is not None and self.max_len < 1:
            raise ConfigError("max_len must be at least 1")
        if self.selection not in (MAX_LOGPROB, ORACLE_BLEU):
            raise ConfigError(f"unknown selection strategy {self.selection!r}")

    def max_len_for(self, source) -> int:
        if self.max_len is not None:
            return self.max_len
        return max(1, int(self.max_len_factor * len(source)) + self.max_len_extra)


class Scorer:
    """One model or a probability-averaged ensemble of identically sized models."""

    def __init__(self, members):
        members = list(members)
        if not members:
            raise ConfigError("scorer needs at least one model")
        dims = members[0].dims
        for m in members[1:]:
            if m.dims != dims:
                raise ConfigError(
                    f"ensemble members disagree on dims: {m.dims} vs {dims}"
                )
        self.members = members
        self.dims = dims
        self._packed = [PackedModel(m) for m in members]

    @classmethod
    def single(cls, params: ModelParams) -> "Scorer":
        return cls([params])

    @classmethod
    def ensemble(cls, members) -> "Scorer":
        return cls(members)

    def sessions(self, source):
        return [DecoderSession(pm, source) for pm in self._packed]


def next_token_distribution(scorer: Scorer, source, prefix) -> np.ndarray:
    """Probability vector for the token following ``prefix``.

    For ensembles this is the arithmetic mean of the members' softmax
    outputs, which again sums to one.
    """
    sessions = scorer.sessions(source)
    dist = np.zeros(scorer.dims.tgt_vocab)
    for session in sessions:
        states = session.start_states(1)
        y_prev = np.array([BOS_ID])
        for tok in prefix:
            _, states = session.step(states, y_prev)
            y_prev = np.array([tok])
        probs, _ = session.step(states, y_prev)
        dist += probs[0]
    return dist / len(sessions)


def _mean_step(sessions, state_list, y_prev):
    new_states = []
    mean = None
    for session, states in zip(sessions, state_list):
        probs, ns = session.step(states, y_prev)
        new_states.append(ns)
        mean = probs if mean is None else mean + probs
    return mean / len(sessions), new_states


def beam_search(scorer: Scorer, source, config: DecodeConfig) -> list[Hypothesis]:
    """Standard left-to-right beam search.

    Expansion covers the full vocabulary; candidates that emit </s> within
    the overall top beam_size move to the finished list while the live beam
    refills to beam_size from the best unfinished expansions.  Live
    hypotheses reaching max_len are force-finished with the model's </s>
    probability.  The search stops once beam_size hypotheses have finished,
    and returns them sorted by log probability (ties: lexicographically
    smaller token sequence first).
    """
    if len(source) == 0:
        raise DataError("cannot decode an empty source sentence")
    beam_size = config.beam_size
    max_len = config.max_len_for(source)
    sessions = scorer.sessions(source)

    # live beam: token tuples, cumulative logprobs, per-member states
    live_tokens = [()]
    live_logprobs = [0.0]
    state_list = [s.start_states(1) for s in sessions]
    finished: list[Hypothesis] = []

    while live_tokens and len(finished) < beam_size:
        y_prev = np.array(
            [toks[-1] if toks else BOS_ID for toks in live_tokens], dtype=np.int64
        )
        probs, new_states = _mean_step(sessions, state_list, y_prev)
        with np.errstate(divide="ignore"):
            logp = np.log(probs)

        at_limit = [len(t) >= max_len for t in live_tokens]
        for k, capped in enumerate(at_limit):
            if capped:
                finished.append(
                    Hypothesis(
                        live_tokens[k], float(live_logprobs[k] + logp[k, EOS_ID]), True
                    )
                )
        keep = [k for k, capped in enumerate(at_limit) if not capped]
        if not keep:
            break
        live_tokens = [live_tokens[k] for k in keep]
        live_logprobs = [live_logprobs[k] for k in keep]
        new_states = [ns[keep] for ns in new_states]
        logp = logp[keep]

        candidates = []  # (neg logprob, tokens, parent, token)
        for k, (toks, lp) in enumerate(zip(live_tokens, live_logprobs)):
            row = logp[k]
            for v in range(row.shape[0]):
                candidates.append((float(-(lp + row[v])), toks + (v,), k, v))
        candidates.sort(key=lambda c: (c[0], c[1]))

        for neg, toks, _, v in candidates[:beam_size]:
            if v == EOS_ID:
                finished.append(Hypothesis(toks[:-1], -neg, True))
        next_tokens, next_logprobs, parents = [], [], []
        for neg, toks, parent, v in candidates:
            if v == EOS_ID:
                continue
            next_tokens.append(toks)
            next_logprobs.append(-neg)
            parents.append(parent)
            if len(next_tokens) == beam_size:
                break
        live_tokens = next_tokens
        live_logprobs = next_logprobs
        state_list = [ns[parents] for ns in new_states]

    finished.sort(key=lambda hyp: (-hyp.logprob, hyp.tokens))
    return finished[:beam_size]


def select_final(candidates, selection, reference=None, length_normalize=False) -> Hypothesis:
    """Pick the final hypothesis from a candidate list.

    MAX_LOGPROB takes the highest cumulative log probability (optionally
    length-normalized); ORACLE_BLEU takes the highest smoothed sentence BLEU
    against ``reference``, breaking ties by log probability then
    lexicographically.
    """
    if not candidates:
        raise DataError("cannot select from an empty candidate list")
    if selection == ORACLE_BLEU:
        if reference is None or len(reference) == 0:
            raise DataError("oracle BLEU selection needs a non-empty reference")
        return min(
            candidates,
            key=lambda hyp: (
                -sentence_bleu(hyp.tokens, reference).score,
                -hyp.logprob,
                hyp.tokens,
            ),
        )
    if selection != MAX_LOGPROB:
        raise ConfigError(f"unknown selection strategy {selection!r}")

    def score(hyp):
        if length_normalize and len(hyp.tokens) > 0:
            return hyp.logprob / len(hyp.tokens)
        return hyp.logprob

    return min(candidates, key=lambda hyp: (-score(hyp), hyp.tokens))


def _translate_one(args):
    scorer, source, config, reference = args
    candidates = beam_search(scorer, source, config)
    return select_final(
        candidates, config.selection, reference, config.length_normalize
    )


_WORKER_STATE: dict = {}


def _pool_init(scorer, config):
    _WORKER_STATE["scorer"] = scorer
    _WORKER_STATE["config"] = config


def _pool_translate(item):
    source, reference = item
    return _translate_one((_WORKER_STATE["scorer"], source, _WORKER_STATE["config"], reference))


def translate_corpus(scorer: Scorer, sources, config: DecodeConfig, refs=None, workers: int = 1):
    """Translate every source independently; output order matches input order
    regardless of worker count."""
    if config.selection == ORACLE_BLEU:
        if refs is None or len(refs) != len(sources):
            raise DataError("oracle BLEU selection needs references aligned with sources")
    refs_list = list(refs) if refs is not None else [None] * len(sources)
    items = list(zip(sources, refs_list))
    if workers <= 1 or len(items) < 2:
        return [_translate_one((scorer, src, config, ref)) for src, ref in items]
    chunk = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_pool_init, initargs=(scorer, config)
    ) as pool:
        return list(pool.map(_pool_translate, items, chunksize=chunk))
