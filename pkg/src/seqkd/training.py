"""SGD training loop: per-epoch shuffling, LR halving, patience stopping.

The learning rate starts at ``initial_lr`` and is halved at the start of
every epoch from ``lr_halve_start_epoch`` on.  After each epoch the model is
scored on the validation set (corpus BLEU of beam decodes by default) and
training stops once the best score has not improved for ``patience`` epochs.
The returned checkpoint holds the best-scoring parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint
from .decoding import DecodeConfig, Scorer, translate_corpus
from .errors import ConfigError, DataError
from .metrics import corpus_bleu
from .model import ModelDims, ModelParams, init_params, loss_and_gradients
from .textcore import ParallelCorpus, shuffle_order

SCRATCH = "scratch"
CONTINUE = "continue"


@dataclass
class TrainConfig:
    """Training hyperparameters; all floats are 64-bit throughout."""

    initial_lr: float = 1.0
    batch_size: int = 64
    lr_halve_start_epoch: int = 4
    patience: int = 3
    max_epochs: int = 20
    seed: int = 1
    init_mode: str = SCRATCH
    init_checkpoint: object = None  # path or Checkpoint when init_mode == CONTINUE
    clip_norm: float | None = None
    monitor: str = "bleu"  # or "perplexity"
    eval_beam: int = 5
    eval_workers: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.initial_lr <= 0:
            raise ConfigError("initial_lr must be positive")
        if self.init_mode not in (SCRATCH, CONTINUE):
            raise ConfigError(f"unknown init_mode {self.init_mode!r}")
        if self.init_mode == CONTINUE and self.init_checkpoint is None:
            raise ConfigError("continue training needs an init_checkpoint")
        if self.monitor not in ("bleu", "perplexity"):
            raise ConfigError(f"unknown monitor {self.monitor!r}")


def write_history(history, path) -> None:
    """Per-epoch training history as TSV (floats via repr, round-trip exact)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch\tlr\ttrain_loss\tval_score\n")
        for h in history:
            f.write(f"{h['epoch']}\t{h['lr']!r}\t{h['train_loss']!r}\t{h['val_score']!r}\n")


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """LR for a 1-based epoch: halved every epoch from the halve-start on."""
    if epoch < config.lr_halve_start_epoch:
        return config.initial_lr
    return config.initial_lr * 0.5 ** (epoch - config.lr_halve_start_epoch + 1)


def should_stop(scores, patience: int) -> bool:
    """True once the running best has not strictly improved for ``patience`` epochs."""
    if len(scores) <= patience:
        return False
    best = scores[0]
    since_best = 0
    for s in scores[1:]:
        if s > best:
            best = s
            since_best = 0
        else:
            since_best += 1
    return since_best >= patience


def clip_gradients(grads: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for name in grads:
            grads[name] = grads[name] * scale
    return total


def _initial_params(config: TrainConfig, dims: ModelDims) -> ModelParams:
    if config.init_mode == SCRATCH:
        return init_params(dims, config.seed)
    ckpt = config.init_checkpoint
    if not isinstance(ckpt, Checkpoint):
        ckpt = load_checkpoint(ckpt)
    if ckpt.dims != dims:
        raise ConfigError(
            f"continue-training checkpoint dims {ckpt.dims.as_dict()} "
            f"do not match requested dims {dims.as_dict()}"
        )
    return ckpt.params.copy()


def _validation_score(params, validation, config: TrainConfig):
    scorer = Scorer.single(params)
    decode = DecodeConfig(beam_size=config.eval_beam)
    hyps = translate_corpus(
        scorer, validation.sources(), decode, workers=config.eval_workers
    )
    bleu = corpus_bleu([h.tokens for h in hyps], validation.targets()).score
    return bleu


def _perplexity(params, corpus):
    losses, counts = 0.0, 0
    for pid, src, tgt in corpus:
        loss, _ = loss_and_gradients(params, [(src, tgt)])
        n = len(tgt) + 1
        losses += loss * n
        counts += n
    return math.exp(losses / counts)


def train(
    config: TrainConfig,
    train_corpus: ParallelCorpus,
    validation: ParallelCorpus,
    dims: ModelDims,
    src_tokens=None,
    tgt_tokens=None,
):
    """Train a model and return (best checkpoint, per-epoch history).

    History rows are dicts with epoch, lr, train_loss, and val_score.  With
    ``max_epochs == 0`` the initial parameters are returned untouched, which
    makes continue-training for zero epochs an exact identity.
    """
    if len(train_corpus) == 0 or (config.max_epochs > 0 and len(validation) == 0):
        raise DataError("training and validation corpora must be non-empty")
    params = _initial_params(config, dims)
    pairs = [(src, tgt) for _, src, tgt in train_corpus]
    history = []
    best_params = params.copy()
    best_score = -math.inf
    best_epoch = 0
    scores = []
    for epoch in range(1, config.max_epochs + 1):
        lr = learning_rate(config, epoch)
        order = shuffle_order(len(pairs), epoch, config.seed)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(pairs), config.batch_size):
            batch = [pairs[i] for i in order[start : start + config.batch_size]]
            loss, grads = loss_and_gradients(params, batch)
            if config.clip_norm is not None:
                clip_gradients(grads, config.clip_norm)
            for name in params.names():
                params[name] = params[name] - lr * grads[name]
            epoch_loss += loss
            n_batches += 1
        train_loss = epoch_loss / n_batches
        if config.monitor == "bleu":
            val_score = _validation_score(params, validation, config)
        else:
            val_score = -_perplexity(params, validation)
        scores.append(val_score)
        history.append(
            {"epoch": epoch, "lr": lr, "train_loss": train_loss, "val_score": val_score}
        )
        if val_score > best_score:
            best_score = val_score
            best_params = params.copy()
            best_epoch = epoch
        if should_stop(scores, config.patience):
            break
    meta = {
        "epoch": best_epoch,
        "lr": learning_rate(config, best_epoch) if best_epoch else config.initial_lr,
        "best_val_score": best_score if best_score > -math.inf else None,
        "seed": config.seed,
        "init_mode": config.init_mode,
        "monitor": config.monitor,
        "epochs_run": len(history),
    }
    if src_tokens is not None:
        meta["src_tokens"] = list(src_tokens)
    if tgt_tokens is not None:
        meta["tgt_tokens"] = list(tgt_tokens)
    return Checkpoint(dims=dims, params=best_params, meta=meta), history
