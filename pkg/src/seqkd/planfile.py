"""Plan files: parse key = value sections and run one distillation plan.

A plan file fully specifies a report row: data paths, teacher checkpoints,
recipe, filter threshold, student dimensions, and training seeds.  Running a
plan writes every intermediate artifact under the plan's output directory so
reruns can be compared byte for byte.
"""

from __future__ import annotations

import configparser
import os

from .checkpoint import load_checkpoint, save_checkpoint
from .decoding import DecodeConfig
from .distill import (
    RECIPES,
    DistillPlan,
    FilterSpec,
    PlanResult,
    TeacherSpec,
    run_plan,
)
from .errors import ConfigError, DataError
from .model import ModelDims
from .report import write_report_tsv
from .textcore import (
    Vocab,
    build_vocab,
    decode_corpus,
    encode_corpus,
    read_parallel,
    write_parallel,
)
from .training import CONTINUE, SCRATCH, TrainConfig, write_history


def _vocab_from_meta(meta: dict, path) -> tuple[Vocab, Vocab]:
    src = meta.get("src_tokens")
    tgt = meta.get("tgt_tokens")
    if not src or not tgt:
        raise DataError(f"{path}: checkpoint carries no vocabulary metadata")
    return Vocab(tuple(src)), Vocab(tuple(tgt))


def parse_plan_file(path):
    """Read a plan file into a plain dict of resolved settings."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise DataError(f"plan file {path} not found")
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    def need(section, key):
        if not cp.has_option(section, key):
            raise ConfigError(f"{path}: missing [{section}] {key}")
        return cp.get(section, key)

    plan = {
        "name": cp.get("plan", "name", fallback=os.path.splitext(os.path.basename(path))[0]),
        "train_src": resolve(need("data", "train_src")),
        "train_tgt": resolve(need("data", "train_tgt")),
        "val_src": resolve(need("data", "val_src")),
        "val_tgt": resolve(need("data", "val_tgt")),
        "test_src": resolve(need("data", "test_src")),
        "test_tgt": resolve(need("data", "test_tgt")),
        "vocab_size": cp.getint("data", "vocab_size", fallback=1000),
        "recipe": need("recipe", "variant"),
        "filter_enabled": cp.getboolean("filter", "enabled", fallback=False),
        "ter_threshold": cp.getfloat("filter", "ter_threshold", fallback=0.8),
        "hlayer": cp.getint("student", "hlayer", fallback=64),
        "wemb": cp.getint("student", "wemb", fallback=32),
        "init": cp.get("student", "init", fallback=SCRATCH),
        "batch_size": cp.getint("train", "batch_size", fallback=64),
        "initial_lr": cp.getfloat("train", "initial_lr", fallback=1.0),
        "lr_halve_start_epoch": cp.getint("train", "lr_halve_start_epoch", fallback=4),
        "patience": cp.getint("train", "patience", fallback=3),
        "max_epochs": cp.getint("train", "max_epochs", fallback=20),
        "seed": cp.getint("train", "seed", fallback=1),
        "clip_norm": cp.getfloat("train", "clip_norm", fallback=None),
        "beam": cp.getint("decode", "beam", fallback=5),
        "out_dir": resolve(cp.get("output", "dir", fallback=f"out/{cp.get('plan', 'name', fallback='plan')}")),
    }
    if plan["recipe"] not in RECIPES:
        raise ConfigError(f"{path}: unknown recipe {plan['recipe']!r}")
    if cp.has_section("teacher"):
        plan["teacher_kind"] = need("teacher", "kind")
        plan["teacher_checkpoints"] = [
            resolve(p.strip())
            for p in need("teacher", "checkpoints").split(",")
            if p.strip()
        ]
    else:
        plan["teacher_kind"] = None
        plan["teacher_checkpoints"] = []
    if plan["init"].startswith(f"{CONTINUE}:"):
        plan["init_mode"] = CONTINUE
        plan["init_checkpoint"] = resolve(plan["init"].split(":", 1)[1])
    elif plan["init"] == SCRATCH:
        plan["init_mode"] = SCRATCH
        plan["init_checkpoint"] = None
    else:
        raise ConfigError(f"{path}: init must be 'scratch' or 'continue:PATH'")
    return plan


def _ter_tsv(ter_scores, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("pair_id\tins\tdel\tsub\tshifts\tref_len\tter\n")
        for pid in sorted(ter_scores):
            r = ter_scores[pid]
            f.write(
                f"{pid}\t{r.insertions}\t{r.deletions}\t{r.substitutions}"
                f"\t{r.shifts}\t{r.ref_length}\t{r.score:.6f}\n"
            )


def run_plan_file(path, out_dir=None, workers: int = 1) -> PlanResult:
    """Execute a plan file and write its artifacts.

    Artifacts: synthetic corpus, TER TSV, assembled training corpus, student
    checkpoint, training history, filter stats, and the report row.
    """
    spec = parse_plan_file(path)
    out = out_dir or spec["out_dir"]
    os.makedirs(out, exist_ok=True)

    train_text = read_parallel(spec["train_src"], spec["train_tgt"])
    val_text = read_parallel(spec["val_src"], spec["val_tgt"])
    test_text = read_parallel(spec["test_src"], spec["test_tgt"])

    teacher = None
    baseline_ckpt = None
    if spec["init_mode"] == CONTINUE:
        baseline_ckpt = load_checkpoint(spec["init_checkpoint"])
    if spec["teacher_checkpoints"]:
        ckpts = [load_checkpoint(p) for p in spec["teacher_checkpoints"]]
        vocab_pair = _vocab_from_meta(ckpts[0].meta, spec["teacher_checkpoints"][0])
        for p, c in zip(spec["teacher_checkpoints"][1:], ckpts[1:]):
            other = _vocab_from_meta(c.meta, p)
            if other[0].tokens != vocab_pair[0].tokens or other[1].tokens != vocab_pair[1].tokens:
                raise DataError(f"{p}: teacher vocabularies disagree")
        src_vocab, tgt_vocab = vocab_pair
        teacher = TeacherSpec(kind=spec["teacher_kind"], members=tuple(c.params for c in ckpts))
        if baseline_ckpt is not None:
            base_vocab = _vocab_from_meta(baseline_ckpt.meta, spec["init_checkpoint"])
            if (base_vocab[0].tokens != src_vocab.tokens
                    or base_vocab[1].tokens != tgt_vocab.tokens):
                raise DataError(
                    f"{spec['init_checkpoint']}: baseline vocabulary disagrees with teacher"
                )
    elif baseline_ckpt is not None:
        src_vocab, tgt_vocab = _vocab_from_meta(baseline_ckpt.meta, spec["init_checkpoint"])
    else:
        src_vocab = build_vocab(train_text.sources(), spec["vocab_size"])
        tgt_vocab = build_vocab(train_text.targets(), spec["vocab_size"])

    original = encode_corpus(train_text, src_vocab, tgt_vocab)
    validation = encode_corpus(val_text, src_vocab, tgt_vocab)
    test = encode_corpus(test_text, src_vocab, tgt_vocab)

    dims = ModelDims(
        src_vocab=len(src_vocab),
        tgt_vocab=len(tgt_vocab),
        embed_dim=spec["wemb"],
        hidden_dim=spec["hlayer"],
    )
    train_config = TrainConfig(
        initial_lr=spec["initial_lr"],
        batch_size=spec["batch_size"],
        lr_halve_start_epoch=spec["lr_halve_start_epoch"],
        patience=spec["patience"],
        max_epochs=spec["max_epochs"],
        seed=spec["seed"],
        init_mode=spec["init_mode"],
        init_checkpoint=baseline_ckpt,
        clip_norm=spec["clip_norm"],
        eval_workers=workers,
    )
    plan = DistillPlan(
        name=spec["name"],
        recipe=spec["recipe"],
        filter_spec=FilterSpec(enabled=spec["filter_enabled"], ter_threshold=spec["ter_threshold"]),
        student_dims=dims,
        train_config=train_config,
        validation=validation,
        test=test,
        teacher=teacher,
        decode=DecodeConfig(beam_size=spec["beam"]),
        workers=workers,
    )
    result = run_plan(
        plan, original, src_tokens=src_vocab.tokens, tgt_tokens=tgt_vocab.tokens
    )

    if result.synthetic is not None:
        write_parallel(
            decode_corpus(result.synthetic, src_vocab, tgt_vocab),
            os.path.join(out, "synthetic.src"),
            os.path.join(out, "synthetic.tgt"),
        )
        _ter_tsv(result.ter_scores, os.path.join(out, "ter_scores.tsv"))
    write_parallel(
        decode_corpus(result.train_set, src_vocab, tgt_vocab),
        os.path.join(out, "train.src"),
        os.path.join(out, "train.tgt"),
    )
    save_checkpoint(result.checkpoint, os.path.join(out, "student.ckpt"))
    write_history(result.history, os.path.join(out, "history.tsv"))
    with open(os.path.join(out, "filter_stats.tsv"), "w", encoding="utf-8") as f:
        f.write("kept\tdropped\tfraction_dropped\n")
        f.write(
            f"{result.stats.kept}\t{result.stats.dropped}\t{result.stats.fraction_dropped:.6f}\n"
        )
    write_report_tsv([result.row], os.path.join(out, "report_row.tsv"))
    return result
