import numpy as np
import pytest

from seqkd.checkpoint import Checkpoint, save_checkpoint
from seqkd.errors import ConfigError
from seqkd.model import ModelDims, init_params
from seqkd.textcore import ParallelCorpus, build_vocab, encode_corpus
from seqkd.training import (
    CONTINUE,
    TrainConfig,
    learning_rate,
    should_stop,
    train,
)


def copy_task_corpus(n_pairs, seed, n_symbols=8, min_len=2, max_len=5):
    """Tiny copy task: target equals source."""
    rng = np.random.default_rng(seed)
    pairs = []
    for pid in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        sent = tuple(f"s{i}" for i in rng.integers(0, n_symbols, length))
        pairs.append((pid, sent, sent))
    return ParallelCorpus(tuple(pairs))


@pytest.fixture(scope="module")
def copy_data():
    train_text = copy_task_corpus(500, seed=21)
    val_text = copy_task_corpus(40, seed=22)
    vocab = build_vocab(train_text.sources(), 100)
    return (
        encode_corpus(train_text, vocab, vocab),
        encode_corpus(val_text, vocab, vocab),
        ModelDims(len(vocab), len(vocab), 16, 32),
        vocab,
    )


class TestLearningRate:
    def test_halving_schedule_from_epoch_four(self):
        config = TrainConfig(initial_lr=1.0, lr_halve_start_epoch=4)
        lrs = [learning_rate(config, e) for e in range(1, 8)]
        assert lrs == [1.0, 1.0, 1.0, 0.5, 0.25, 0.125, 0.0625]

    def test_custom_start(self):
        config = TrainConfig(initial_lr=2.0, lr_halve_start_epoch=1)
        assert learning_rate(config, 1) == 1.0
        assert learning_rate(config, 3) == 0.25


class TestShouldStop:
    def test_scripted_patience_sequence(self):
        # no new best after the 2nd epoch: stop exactly after the 5th
        scores = [10, 12, 11, 11, 12]
        assert not should_stop(scores[:4], patience=3)
        assert should_stop(scores, patience=3)

    def test_improvement_resets(self):
        assert not should_stop([1, 2, 3, 4, 5], patience=3)
        assert not should_stop([5, 4, 3, 6, 2, 1], patience=3)
        assert should_stop([5, 4, 3, 6, 2, 1, 0], patience=3)

    def test_equal_score_is_not_improvement(self):
        assert should_stop([7, 7, 7, 7], patience=3)


class TestTrainLoop:
    def test_loss_strictly_decreases_on_copy_task(self, copy_data):
        train_c, val_c, dims, _ = copy_data
        config = TrainConfig(
            initial_lr=4.0, batch_size=32, max_epochs=3, patience=3, seed=1,
            clip_norm=1.0, eval_beam=2,
        )
        _, history = train(config, train_c, val_c, dims)
        losses = [h["train_loss"] for h in history]
        assert len(losses) == 3
        assert losses[0] > losses[1] > losses[2]

    def test_deterministic_checkpoint_bytes(self, copy_data, tmp_path):
        train_c, val_c, dims, vocab = copy_data
        config = TrainConfig(
            initial_lr=2.0, batch_size=64, max_epochs=2, patience=3, seed=5,
            eval_beam=2,
        )
        paths = []
        for tag in ("a", "b"):
            ckpt, _ = train(config, train_c, val_c, dims,
                            src_tokens=vocab.tokens, tgt_tokens=vocab.tokens)
            path = tmp_path / f"{tag}.ckpt"
            save_checkpoint(ckpt, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_continue_for_zero_epochs_is_identity(self, copy_data, tmp_path):
        train_c, val_c, dims, _ = copy_data
        base = Checkpoint(dims=dims, params=init_params(dims, seed=9), meta={"seed": 9})
        path = tmp_path / "base.ckpt"
        save_checkpoint(base, path)
        config = TrainConfig(
            initial_lr=1.0, max_epochs=0, init_mode=CONTINUE, init_checkpoint=str(path),
        )
        ckpt, history = train(config, train_c, val_c, dims)
        assert history == []
        for name in base.params.names():
            assert np.array_equal(ckpt.params[name], base.params[name])

    def test_continue_dims_mismatch(self, copy_data, tmp_path):
        train_c, val_c, dims, _ = copy_data
        other = ModelDims(dims.src_vocab, dims.tgt_vocab, dims.embed_dim, dims.hidden_dim + 1)
        base = Checkpoint(dims=other, params=init_params(other, seed=1), meta={})
        path = tmp_path / "base.ckpt"
        save_checkpoint(base, path)
        config = TrainConfig(
            initial_lr=1.0, max_epochs=1, init_mode=CONTINUE, init_checkpoint=str(path),
        )
        with pytest.raises(ConfigError):
            train(config, train_c, val_c, dims)

    def test_patience_stops_training(self, copy_data):
        train_c, val_c, dims, _ = copy_data
        # lr 0 never improves anything: validation score is flat
        config = TrainConfig(
            initial_lr=1e-12, batch_size=64, max_epochs=12, patience=2, seed=3,
            eval_beam=1,
        )
        _, history = train(config, train_c, val_c, dims)
        assert len(history) == 3  # epoch 1 sets the best; 2 more non-improving

    def test_best_checkpoint_returned(self, copy_data):
        train_c, val_c, dims, _ = copy_data
        config = TrainConfig(
            initial_lr=4.0, batch_size=32, max_epochs=3, patience=3, seed=2,
            clip_norm=1.0, eval_beam=2,
        )
        ckpt, history = train(config, train_c, val_c, dims)
        best = max(history, key=lambda h: h["val_score"])
        assert ckpt.meta["epoch"] == best["epoch"]
        assert ckpt.meta["best_val_score"] == best["val_score"]

    def test_perplexity_monitor(self, copy_data):
        train_c, val_c, dims, _ = copy_data
        small_val = ParallelCorpus(val_c.pairs[:5])
        config = TrainConfig(
            initial_lr=2.0, batch_size=64, max_epochs=2, patience=3, seed=4,
            monitor="perplexity",
        )
        _, history = train(config, train_c, small_val, dims)
        # scores are negated perplexities: improvement means increase
        assert history[1]["val_score"] >= history[0]["val_score"]

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(patience=0)
        with pytest.raises(ConfigError):
            TrainConfig(init_mode=CONTINUE)
        with pytest.raises(ConfigError):
            TrainConfig(init_mode="bogus")
