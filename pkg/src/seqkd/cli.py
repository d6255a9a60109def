"""Command-line frontend exposing every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data or validation error.  All
diagnostics go to stderr; data goes to files or stdout only.  Every source
of randomness is an explicit --seed flag, so reruns with identical flags
reproduce identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import bpe as bpe_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .decoding import DecodeConfig, ORACLE_BLEU, Scorer, translate_corpus
from .distill import FilterSpec, build_training_set, gen_toy_corpus
from .errors import DataError, SeqkdError
from .metrics import corpus_bleu, corpus_ter, sentence_bleu, ter
from .model import ModelDims
from .planfile import run_plan_file
from .report import read_report_tsv, render_report
from .textcore import (
    ParallelCorpus,
    Vocab,
    build_vocab,
    encode_corpus,
    read_parallel,
    read_tokens,
    save_vocab,
    write_parallel,
)
from .training import SCRATCH, CONTINUE, TrainConfig, train, write_history


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _log(msg):
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- commands


def cmd_gen_toy(ns):
    corpus, noisy = gen_toy_corpus(ns.seed, ns.size, ns.noise_rate)
    os.makedirs(ns.out_dir, exist_ok=True)
    src = os.path.join(ns.out_dir, f"{ns.prefix}.src")
    tgt = os.path.join(ns.out_dir, f"{ns.prefix}.tgt")
    write_parallel(corpus, src, tgt)
    with open(os.path.join(ns.out_dir, f"{ns.prefix}.labels"), "w", encoding="utf-8") as f:
        f.write("pair_id\tnoisy\n")
        for (pid, _, _), flag in zip(corpus, noisy):
            f.write(f"{pid}\t{int(flag)}\n")
    _log(f"wrote {len(corpus)} pairs ({sum(noisy)} noisy) to {ns.out_dir}")
    return 0


def cmd_build_vocab(ns):
    sentences = []
    for path in ns.input:
        sentences.extend(read_tokens(path))
    vocab = build_vocab(sentences, ns.max_size)
    save_vocab(vocab, ns.out)
    _log(f"vocabulary of {len(vocab)} tokens written to {ns.out}")
    return 0


def cmd_bpe_learn(ns):
    sentences = []
    for path in ns.input:
        sentences.extend(read_tokens(path))
    table = bpe_mod.learn_bpe(sentences, ns.merges)
    bpe_mod.save_merge_table(table, ns.out)
    _log(f"learned {len(table)} merges from {len(ns.input)} file(s)")
    return 0


def cmd_bpe_apply(ns):
    table = bpe_mod.load_merge_table(ns.table)
    with open(ns.out, "w", encoding="utf-8") as f:
        for tokens in read_tokens(ns.input):
            if ns.undo:
                f.write(" ".join(bpe_mod.undo_bpe(tokens)) + "\n")
            else:
                f.write(" ".join(bpe_mod.apply_bpe(tokens, table)) + "\n")
    return 0


def cmd_train(ns):
    train_text = read_parallel(ns.src, ns.tgt)
    val_text = read_parallel(ns.val_src, ns.val_tgt)
    init_ckpt = None
    if ns.init == SCRATCH:
        init_mode = SCRATCH
    elif ns.init.startswith(f"{CONTINUE}:"):
        init_mode = CONTINUE
        init_ckpt = load_checkpoint(ns.init.split(":", 1)[1])
    else:
        raise UsageError("--init must be 'scratch' or 'continue:PATH'")
    if init_ckpt is not None and init_ckpt.meta.get("src_tokens"):
        src_vocab = Vocab(tuple(init_ckpt.meta["src_tokens"]))
        tgt_vocab = Vocab(tuple(init_ckpt.meta["tgt_tokens"]))
    else:
        src_vocab = build_vocab(train_text.sources(), ns.vocab_size)
        tgt_vocab = build_vocab(train_text.targets(), ns.vocab_size)
    dims = ModelDims(
        src_vocab=len(src_vocab),
        tgt_vocab=len(tgt_vocab),
        embed_dim=ns.wemb,
        hidden_dim=ns.hlayer,
    )
    config = TrainConfig(
        initial_lr=ns.lr,
        batch_size=ns.batch_size,
        lr_halve_start_epoch=ns.lr_halve_start,
        patience=ns.patience,
        max_epochs=ns.max_epochs,
        seed=ns.seed,
        init_mode=init_mode,
        init_checkpoint=init_ckpt,
        clip_norm=ns.clip_norm,
        eval_beam=ns.beam,
        eval_workers=ns.workers,
    )
    ckpt, history = train(
        config,
        encode_corpus(train_text, src_vocab, tgt_vocab),
        encode_corpus(val_text, src_vocab, tgt_vocab),
        dims,
        src_tokens=src_vocab.tokens,
        tgt_tokens=tgt_vocab.tokens,
    )
    os.makedirs(ns.out_dir, exist_ok=True)
    save_checkpoint(ckpt, os.path.join(ns.out_dir, "model.ckpt"))
    write_history(history, os.path.join(ns.out_dir, "history.tsv"))
    best = ckpt.meta.get("best_val_score")
    _log(
        f"trained {len(history)} epoch(s); best val score "
        f"{best if best is not None else 'n/a'} at epoch {ckpt.meta.get('epoch')}"
    )
    return 0


def cmd_translate(ns):
    ckpts = [load_checkpoint(p) for p in ns.model]
    members = [c.params for c in ckpts]
    meta = ckpts[0].meta
    if not meta.get("src_tokens"):
        raise DataError(f"{ns.model[0]}: checkpoint carries no vocabulary metadata")
    src_vocab = Vocab(tuple(meta["src_tokens"]))
    tgt_vocab = Vocab(tuple(meta["tgt_tokens"]))
    for path, c in zip(ns.model[1:], ckpts[1:]):
        if c.meta.get("src_tokens") != meta["src_tokens"] or c.meta.get("tgt_tokens") != meta["tgt_tokens"]:
            raise DataError(f"{path}: ensemble vocabularies disagree")
    scorer = Scorer(members)
    _log(f"decoding with {len(members)} model(s), beam {ns.beam}")
    sources_text = read_tokens(ns.src)
    sources = [src_vocab.encode(s) for s in sources_text]
    refs = None
    selection = "max_logprob"
    if ns.oracle_ref:
        refs_text = read_tokens(ns.oracle_ref)
        if len(refs_text) != len(sources):
            raise DataError(
                f"--oracle-ref has {len(refs_text)} lines, source has {len(sources)}"
            )
        refs = [tgt_vocab.encode(r) for r in refs_text]
        selection = ORACLE_BLEU
    config = DecodeConfig(
        beam_size=ns.beam,
        max_len=ns.max_len,
        max_len_factor=ns.max_len_factor,
        max_len_extra=ns.max_len_extra,
        selection=selection,
        length_normalize=ns.length_normalize,
    )
    hyps = translate_corpus(scorer, sources, config, refs=refs, workers=ns.workers)
    with open(ns.out, "w", encoding="utf-8") as f:
        for hyp in hyps:
            f.write(" ".join(tgt_vocab.decode(hyp.tokens)) + "\n")
    if ns.scores_tsv:
        with open(ns.scores_tsv, "w", encoding="utf-8") as f:
            f.write("logprob\tsbleu\n")
            for i, hyp in enumerate(hyps):
                if refs is not None and len(refs[i]) > 0:
                    sb = f"{sentence_bleu(hyp.tokens, refs[i]).score:.6f}"
                else:
                    sb = ""
                f.write(f"{hyp.logprob!r}\t{sb}\n")
    return 0


def cmd_score(ns):
    hyps = read_tokens(ns.hyp)
    refs = read_tokens(ns.ref)
    if len(hyps) != len(refs):
        raise DataError(f"--hyp has {len(hyps)} lines, --ref has {len(refs)}")
    want_bleu = ns.metric in ("sbleu", "both")
    want_ter = ns.metric in ("ter", "both")
    out = open(ns.out, "w", encoding="utf-8") if ns.out else sys.stdout
    try:
        cols = ["pair_id"]
        if want_bleu:
            cols += ["sbleu", "bp", "m1", "m2", "m3", "m4", "t1", "t2", "t3", "t4"]
        if want_ter:
            cols += ["ter", "ins", "del", "sub", "shifts", "ref_len"]
        out.write("\t".join(cols) + "\n")
        for i, (hyp, ref) in enumerate(zip(hyps, refs)):
            fields = [str(i)]
            if want_bleu:
                b = sentence_bleu(hyp, ref)
                fields += [f"{b.score:.6f}", f"{b.bp:.6f}"]
                fields += [str(m) for m in b.matched] + [str(t) for t in b.total]
            if want_ter:
                t = ter(hyp, ref)
                fields += [
                    f"{t.score:.6f}",
                    str(t.insertions),
                    str(t.deletions),
                    str(t.substitutions),
                    str(t.shifts),
                    str(t.ref_length),
                ]
            out.write("\t".join(fields) + "\n")
        summary = [f"pairs={len(hyps)}"]
        if want_bleu:
            summary.append(f"corpus_bleu={corpus_bleu(hyps, refs).score:.6f}")
        if want_ter:
            summary.append(f"corpus_ter={corpus_ter(hyps, refs):.6f}")
        out.write("# " + " ".join(summary) + "\n")
    finally:
        if ns.out:
            out.close()
    return 0


def cmd_filter(ns):
    original = read_parallel(ns.src, ns.tgt)
    trans = read_tokens(ns.trans)
    if len(trans) != len(original):
        raise DataError(f"--trans has {len(trans)} lines, corpus has {len(original)}")
    synthetic = ParallelCorpus(
        tuple((pid, src, tuple(t)) for (pid, src, _), t in zip(original, trans))
    )
    ter_scores = {
        pid: ter(t, tgt) for (pid, _, tgt), (_, _, t) in zip(original, synthetic)
    }
    spec = FilterSpec(enabled=True, ter_threshold=ns.ter_threshold)
    filtered, stats = build_training_set(original, synthetic, ns.recipe, spec, ter_scores)
    os.makedirs(ns.out_dir, exist_ok=True)
    write_parallel(
        filtered,
        os.path.join(ns.out_dir, "filtered.src"),
        os.path.join(ns.out_dir, "filtered.tgt"),
    )
    with open(os.path.join(ns.out_dir, "ter_scores.tsv"), "w", encoding="utf-8") as f:
        f.write("pair_id\tter\n")
        for pid in sorted(ter_scores):
            f.write(f"{pid}\t{ter_scores[pid].score:.6f}\n")
    _log(
        f"kept {stats.kept}/{stats.total} pairs "
        f"({100 * stats.fraction_dropped:.1f}% dropped), wrote {len(filtered)} training pairs"
    )
    return 0


def cmd_distill_run(ns):
    result = run_plan_file(ns.plan, out_dir=ns.out_dir, workers=ns.workers)
    row = result.row
    _log(
        f"plan {row.name}: {row.train_pairs} pairs, {row.epochs} epochs, "
        f"test BLEU {row.test_bleu:.2f}, test TER {row.test_ter:.2f}"
    )
    return 0


def cmd_report(ns):
    rows = []
    for path in ns.rows:
        rows.extend(read_report_tsv(path))
    paths = render_report(rows, ns.out_dir, basename=ns.basename)
    _log(f"report over {len(rows)} row(s) written to {paths['tsv']}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> CliParser:
    parser = CliParser(prog="seqkd", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen-toy", help="generate a deterministic toy parallel corpus")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--noise-rate", type=float, default=0.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="toy")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("build-vocab", help="build a vocabulary from text files")
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--max-size", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("bpe-learn", help="learn BPE merges from text files")
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--merges", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="apply (or undo) BPE segmentation")
    p.add_argument("--input", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--undo", action="store_true")
    p.set_defaults(func=cmd_bpe_apply)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--val-src", required=True)
    p.add_argument("--val-tgt", required=True)
    p.add_argument("--hlayer", type=int, default=64)
    p.add_argument("--wemb", type=int, default=32)
    p.add_argument("--vocab-size", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--lr-halve-start", type=int, default=4)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--max-epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--init", default=SCRATCH, help="scratch | continue:PATH")
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="beam-decode a source file")
    p.add_argument("--model", action="append", required=True, help="repeat for an ensemble")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--max-len-factor", type=float, default=2.0)
    p.add_argument("--max-len-extra", type=int, default=5)
    p.add_argument("--oracle-ref", default=None, help="pick candidates by sentence BLEU against this file")
    p.add_argument("--length-normalize", action="store_true")
    p.add_argument("--scores-tsv", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("score", help="sentence BLEU / TER for aligned files")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metric", choices=("sbleu", "ter", "both"), default="both")
    p.add_argument("--out", default=None, help="TSV output path (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("filter", help="TER-filter a corpus against forward translations")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--trans", required=True, help="forward translations aligned with --src")
    p.add_argument("--ter-threshold", type=float, default=0.8)
    p.add_argument(
        "--recipe",
        choices=("forward", "forward+original", "reference"),
        default="reference",
    )
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("distill-run", help="run one distillation plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("--out-dir", default=None, help="override the plan's output directory")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_distill_run)

    p = sub.add_parser("report", help="merge report rows into tables and figures")
    p.add_argument("rows", nargs="+", help="report row TSV files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--basename", default="report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        return ns.func(ns)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SeqkdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
