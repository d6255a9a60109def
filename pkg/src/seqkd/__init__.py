"""Sequence-level knowledge distillation toolkit for small attention NMT models."""

from .bpe import MergeTable, apply_bpe, learn_bpe, undo_bpe
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .decoding import (
    DecodeConfig,
    Hypothesis,
    Scorer,
    beam_search,
    next_token_distribution,
    select_final,
    translate_corpus,
)
from .distill import (
    DistillPlan,
    FilterSpec,
    TeacherSpec,
    build_training_set,
    forward_translate_training_data,
    gen_toy_corpus,
    run_plan,
)
from .errors import CheckpointError, ConfigError, DataError, NumericsError, SeqkdError
from .metrics import corpus_bleu, corpus_ter, edit_distance, ngram_counts, sentence_bleu, ter
from .model import ModelDims, ModelParams, forward_logprobs, init_params, loss_and_gradients
from .textcore import (
    ParallelCorpus,
    Vocab,
    build_vocab,
    encode_corpus,
    read_parallel,
    shuffle_order,
    write_parallel,
)
from .training import TrainConfig, train

__version__ = "0.1.0"
