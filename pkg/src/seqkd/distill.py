"""Distillation pipeline: teacher translation, data recipes, TER filtering.

A plan ties together one teacher (single model, probability-averaged
ensemble, or oracle-BLEU beam selection), one data recipe (forward
translations only, forward plus original, or references only), an optional
TER filter, and one student training run.  Running a plan yields one report
row.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .decoding import (
    DecodeConfig,
    MAX_LOGPROB,
    ORACLE_BLEU,
    Scorer,
    translate_corpus,
)
from .errors import ConfigError, DataError
from .metrics import corpus_bleu, corpus_ter, ter
from .model import ModelDims, ModelParams
from .textcore import ParallelCorpus
from .training import TrainConfig, train

TEACHER_SINGLE = "single"
TEACHER_ENSEMBLE = "ensemble"
TEACHER_ORACLE = "oracle"

RECIPE_FORWARD = "forward"
RECIPE_FORWARD_PLUS_ORIGINAL = "forward+original"
RECIPE_REFERENCE = "reference"
RECIPES = (RECIPE_FORWARD, RECIPE_FORWARD_PLUS_ORIGINAL, RECIPE_REFERENCE)


@dataclass(frozen=True)
class TeacherSpec:
    """Teacher kind plus its member parameter sets (all same dims)."""

    kind: str
    members: tuple

    def __post_init__(self):
        if self.kind not in (TEACHER_SINGLE, TEACHER_ENSEMBLE, TEACHER_ORACLE):
            raise ConfigError(f"unknown teacher kind {self.kind!r}")
        if not self.members:
            raise ConfigError("teacher needs at least one model")
        if self.kind == TEACHER_SINGLE and len(self.members) != 1:
            raise ConfigError("single teacher takes exactly one model")

    def scorer(self) -> Scorer:
        return Scorer(list(self.members))

    @property
    def selection(self) -> str:
        return ORACLE_BLEU if self.kind == TEACHER_ORACLE else MAX_LOGPROB


@dataclass(frozen=True)
class FilterSpec:
    enabled: bool = False
    ter_threshold: float = 0.8

    def __post_init__(self):
        if self.ter_threshold < 0:
            raise ConfigError("ter_threshold must be non-negative")


@dataclass(frozen=True)
class FilterStats:
    kept: int
    dropped: int

    @property
    def total(self) -> int:
        return self.kept + self.dropped

    @property
    def fraction_dropped(self) -> float:
        return self.dropped / self.total if self.total else 0.0


def forward_translate_training_data(
    teacher: TeacherSpec, corpus: ParallelCorpus, decode: DecodeConfig, workers: int = 1
):
    """Translate every source with the teacher and score each translation
    against the original reference.

    Returns (synthetic corpus with the same pair ids, {pair_id: TerResult}).
    Oracle teachers see the reference during final-candidate selection.
    """
    if len(corpus) == 0:
        raise DataError("cannot forward-translate an empty corpus")
    scorer = teacher.scorer()
    decode = replace(decode, selection=teacher.selection)
    refs = corpus.targets()
    hyps = translate_corpus(scorer, corpus.sources(), decode, refs=refs, workers=workers)
    pairs = []
    ter_scores = {}
    for (pid, src, tgt), hyp in zip(corpus, hyps):
        pairs.append((pid, src, hyp.tokens))
        ter_scores[pid] = ter(hyp.tokens, tgt)
    return ParallelCorpus(tuple(pairs)), ter_scores


def build_training_set(
    original: ParallelCorpus,
    synthetic: ParallelCorpus | None,
    recipe: str,
    filter_spec: FilterSpec,
    ter_scores=None,
):
    """Assemble the student training corpus for one recipe.

    Filtering keeps pairs with TER <= threshold (boundary inclusive) and
    drops a filtered pair from both its original and synthetic copies.  The
    forward+original recipe interleaves surviving original and synthetic
    pairs under fresh pair ids.  Returns (corpus, FilterStats).
    """
    if recipe not in RECIPES:
        raise ConfigError(f"unknown recipe {recipe!r}")
    if recipe != RECIPE_REFERENCE and synthetic is None:
        raise ConfigError(f"recipe {recipe!r} needs a synthetic corpus")
    if synthetic is not None:
        synth_by_id = {pid: (src, tgt) for pid, src, tgt in synthetic}
        missing = [pid for pid, _, _ in original if pid not in synth_by_id]
        if missing:
            raise DataError(f"synthetic corpus missing pair ids {missing[:5]}")

    if filter_spec.enabled:
        if ter_scores is None:
            raise DataError("filtering needs per-pair TER scores")
        keep_ids = []
        for pid, _, _ in original:
            if pid not in ter_scores:
                raise DataError(f"missing TER score for pair id {pid}")
            score = ter_scores[pid]
            score = score.score if hasattr(score, "score") else float(score)
            keep_ids.append(score <= filter_spec.ter_threshold)
    else:
        keep_ids = [True] * len(original)

    kept_original = [p for p, keep in zip(original.pairs, keep_ids) if keep]
    stats = FilterStats(kept=len(kept_original), dropped=len(original) - len(kept_original))

    if recipe == RECIPE_REFERENCE:
        selected = kept_original
    elif recipe == RECIPE_FORWARD:
        selected = [(pid, src, synth_by_id[pid][1]) for pid, src, _ in kept_original]
    else:
        selected = []
        for pid, src, tgt in kept_original:
            selected.append((pid, src, tgt))
            selected.append((pid, src, synth_by_id[pid][1]))
    renumbered = tuple((i, src, tgt) for i, (_, src, tgt) in enumerate(selected))
    return ParallelCorpus(renumbered), stats


@dataclass
class DistillPlan:
    """One experiment row: teacher x recipe x filter x student."""

    name: str
    recipe: str
    filter_spec: FilterSpec
    student_dims: ModelDims
    train_config: TrainConfig
    validation: ParallelCorpus
    test: ParallelCorpus
    teacher: TeacherSpec | None = None
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    workers: int = 1

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {self.recipe!r}")
        needs_teacher = self.recipe != RECIPE_REFERENCE or self.filter_spec.enabled
        if needs_teacher and self.teacher is None:
            raise ConfigError(f"plan {self.name!r} needs a teacher for recipe/filter")


@dataclass
class ReportRow:
    name: str
    teacher: str
    recipe: str
    init_mode: str
    filtered: bool
    train_pairs: int
    epochs: int
    val_bleu: float
    val_ter: float
    test_bleu: float
    test_ter: float


def evaluate(params: ModelParams, corpus: ParallelCorpus, beam: int = 5, workers: int = 1):
    """Corpus BLEU and TER of beam decodes, in points (0..100)."""
    hyps = translate_corpus(
        Scorer.single(params), corpus.sources(), DecodeConfig(beam_size=beam), workers=workers
    )
    tokens = [h.tokens for h in hyps]
    refs = corpus.targets()
    return 100.0 * corpus_bleu(tokens, refs).score, 100.0 * corpus_ter(tokens, refs)


@dataclass
class PlanResult:
    row: ReportRow
    checkpoint: object
    history: list
    synthetic: ParallelCorpus | None
    ter_scores: dict | None
    train_set: ParallelCorpus
    stats: FilterStats


def run_plan(plan: DistillPlan, original: ParallelCorpus, src_tokens=None, tgt_tokens=None) -> PlanResult:
    """Execute one plan end to end and produce its report row.

    The full run is a pure function of (plan, corpora, seeds): teacher
    translation, recipe assembly, student training, and beam-5 evaluation on
    the validation and test sets.
    """
    if len(original) == 0:
        raise DataError("original corpus is empty")
    synthetic = None
    ter_scores = None
    if plan.teacher is not None:
        synthetic, ter_scores = forward_translate_training_data(
            plan.teacher, original, plan.decode, workers=plan.workers
        )
    train_set, stats = build_training_set(
        original, synthetic, plan.recipe, plan.filter_spec, ter_scores
    )
    if len(train_set) == 0:
        raise DataError(f"plan {plan.name!r}: no training pairs survive filtering")
    ckpt, history = train(
        plan.train_config,
        train_set,
        plan.validation,
        plan.student_dims,
        src_tokens=src_tokens,
        tgt_tokens=tgt_tokens,
    )
    val_bleu, val_ter = evaluate(
        ckpt.params, plan.validation, beam=plan.decode.beam_size, workers=plan.workers
    )
    test_bleu, test_ter = evaluate(
        ckpt.params, plan.test, beam=plan.decode.beam_size, workers=plan.workers
    )
    row = ReportRow(
        name=plan.name,
        teacher=plan.teacher.kind if plan.teacher else "none",
        recipe=plan.recipe,
        init_mode=plan.train_config.init_mode,
        filtered=plan.filter_spec.enabled,
        train_pairs=len(train_set),
        epochs=len(history),
        val_bleu=val_bleu,
        val_ter=val_ter,
        test_bleu=test_bleu,
        test_ter=test_ter,
    )
    return PlanResult(row, ckpt, history, synthetic, ter_scores, train_set, stats)


# ---------------------------------------------------------------------------
# synthetic transduction task for desk-scale experiments
# ---------------------------------------------------------------------------

TOY_SRC_ALPHABET = tuple(f"a{i}" for i in range(10))
TOY_TGT_ALPHABET = tuple(f"b{i}" for i in range(10))
TOY_MIN_LEN = 2
TOY_MAX_LEN = 8


def toy_transform(src_tokens):
    """Reference mapping of the toy task: map symbols, then swap each
    adjacent pair at even indices (exercises non-monotone attention)."""
    mapped = [TOY_TGT_ALPHABET[TOY_SRC_ALPHABET.index(t)] for t in src_tokens]
    for i in range(0, len(mapped) - 1, 2):
        mapped[i], mapped[i + 1] = mapped[i + 1], mapped[i]
    return tuple(mapped)


def gen_toy_corpus(seed: int, size: int, noise_rate: float = 0.0):
    """Generate a deterministic toy parallel corpus.

    With probability ``noise_rate`` a pair's target is replaced by the
    transform of an independently drawn source (the pair is labeled noisy),
    imitating nonparallel sentence pairs in crawled data.

    Returns (ParallelCorpus of token strings, list of noisy flags).
    """
    if size < 1:
        raise ConfigError("toy corpus size must be at least 1")
    if not 0.0 <= noise_rate <= 1.0:
        raise ConfigError("noise_rate must be in [0, 1]")
    rng = np.random.default_rng(seed)
    pairs = []
    noisy = []
    for pid in range(size):
        length = int(rng.integers(TOY_MIN_LEN, TOY_MAX_LEN + 1))
        src = tuple(TOY_SRC_ALPHABET[i] for i in rng.integers(0, 10, length))
        is_noisy = bool(rng.random() < noise_rate)
        if is_noisy:
            other_len = int(rng.integers(TOY_MIN_LEN, TOY_MAX_LEN + 1))
            other = tuple(TOY_SRC_ALPHABET[i] for i in rng.integers(0, 10, other_len))
            tgt = toy_transform(other)
        else:
            tgt = toy_transform(src)
        pairs.append((pid, src, tgt))
        noisy.append(is_noisy)
    return ParallelCorpus(tuple(pairs)), noisy
