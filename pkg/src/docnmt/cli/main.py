"""``docnmt`` command line: one subcommand per pipeline step."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Callable, Sequence

from .. import __version__
from ..architectures import (
    CheckpointError,
    ConfigError,
    DocTransformer,
    ModelConfig,
    VocabMismatch,
    load_contextlm,
    load_model,
    parse_variant,
    save_model,
)
from ..corpus import (
    SAMPLE_KINDS,
    BpeModel,
    CorpusError,
    TextCodec,
    Vocab,
    atomic_write_text,
    bpe_apply,
    bpe_train,
    build_context_samples,
    corpus_stats,
    load_alignments,
    load_contrastive,
    load_documents,
    load_parallel,
    load_samples,
    read_jsonl,
    save_samples,
    split_headline_body,
)
from ..decoding import backtranslate, save_translations, translate
from ..evaluation import MetricError, PronounLexicon, apt, bleu, contrastive_eval, reports_table, split_eval, write_reports
from ..numkernel import ContractViolation, DimensionError
from ..synthbench import BudgetMismatch, GrammarError, HarnessConfig, SynthCorpusBundle, default_finetune, gen_corpus, make_grammar, run_comparison
from ..training import ConfigFileError, TrainConfig, TrainingError, TrainState, from_kv, load_kv, train, warm_start
from .manifest import RunDirBusy, RunManifest, default_run_dir, file_digest, locked_run_dir

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DATA_ERRORS = (
    CorpusError, ConfigError, ConfigFileError, CheckpointError, VocabMismatch, TrainingError, MetricError,
    GrammarError, BudgetMismatch, ContractViolation, DimensionError, RunDirBusy, OSError, ValueError, KeyError,
    json.JSONDecodeError,
)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers
def load_codec(args) -> TextCodec:
    return TextCodec(BpeModel.load(args.bpe), Vocab.load(args.vocab))


def _read_sentences(path) -> list[str]:
    """Sentences from a document JSONL file (flattened) or a plain text file."""
    p = Path(path)
    if p.suffix == ".jsonl":
        out = []
        for d in load_documents(p):
            out.extend(d.sentences)
        return out
    return p.read_text(encoding="utf-8").splitlines()


def read_keyed(path) -> dict[tuple[str, int], str]:
    """(doc, index) -> sentence from translation JSONL, document JSONL or plain text."""
    p = Path(path)
    if p.suffix != ".jsonl":
        return {("", i): line for i, line in enumerate(p.read_text(encoding="utf-8").splitlines())}
    records = read_jsonl(p)
    out: dict[tuple[str, int], str] = {}
    for r in records:
        if "hyp" in r:
            out[(str(r["doc"]), int(r["index"]))] = r["hyp"]
        elif "sentences" in r:
            for i, s in enumerate(r["sentences"]):
                out[(str(r["id"]), i)] = s
        else:
            raise CorpusError(f"{path}: records need 'hyp' or 'sentences'")
    return out


def aligned_pair(hyp_path, ref_path) -> tuple[list[str], list[str], list[tuple[str, int]]]:
    hyps = read_keyed(hyp_path)
    refs = read_keyed(ref_path)
    keys = sorted(refs)
    missing = [k for k in keys if k not in hyps]
    if missing or len(hyps) != len(refs):
        raise MetricError(f"hypotheses and references do not cover the same sentences ({len(hyps)} vs {len(refs)})")
    return [hyps[k] for k in keys], [refs[k] for k in keys], keys


def parse_overrides(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"vocab_size"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def split_config(args) -> tuple[dict, TrainConfig]:
    """Model keys and TrainConfig from ``--config`` with ``--set`` overrides on top."""
    values = load_kv(args.config) if args.config else {}
    values.update(parse_overrides(args.set))
    unknown = set(values) - MODEL_KEYS - TRAIN_KEYS
    if unknown:
        raise ConfigFileError(f"unknown config keys: {sorted(unknown)}")
    model_vals = {k: v for k, v in values.items() if k in MODEL_KEYS}
    train_vals = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    return model_vals, from_kv(TrainConfig, train_vals)


def model_config(vocab_size: int, values: dict) -> ModelConfig:
    values = dict(values)
    variant = values.pop("variant", "baseline")
    return from_kv(ModelConfig, {"vocab_size": str(vocab_size), **values}).with_variant(variant)


def _digest_inputs(paths) -> dict[str, str]:
    return {str(p): file_digest(p) for p in paths if p and Path(p).is_file()}


# ---------------------------------------------------------------- commands
def cmd_bpe_train(args) -> int:
    sentences = []
    for path in args.input:
        sentences.extend(_read_sentences(path))
    bpe = bpe_train(sentences, args.merges)
    vocab = Vocab.build(bpe_apply(bpe, s) for s in sentences)
    bpe.save(args.out_bpe)
    vocab.save(args.out_vocab)
    print(f"{len(bpe.merges)} merges, {len(vocab)} vocabulary entries")
    return EXIT_OK


def cmd_bpe_apply(args) -> int:
    bpe = BpeModel.load(args.bpe)
    lines = [" ".join(bpe_apply(bpe, s)) for s in _read_sentences(args.input)]
    atomic_write_text(args.output, "".join(line + "\n" for line in lines))
    return EXIT_OK


def cmd_make_samples(args) -> int:
    codec = load_codec(args)
    corpus = load_parallel(args.src, args.tgt)
    samples = build_context_samples(corpus, args.kind, codec)
    save_samples(args.out, samples)
    print(f"{len(samples)} {args.kind} samples")
    return EXIT_OK


def _train_common(args, model: DocTransformer, cfg: TrainConfig, vocab_hash: str) -> int:
    samples = load_samples(args.samples)
    val = load_samples(args.val_samples) if args.val_samples else None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = TrainState.load(args.resume_state) if args.resume_state else None
    history = read_jsonl(out / "train_log.jsonl") if state is not None and (out / "train_log.jsonl").exists() else None
    result = train(model, samples, cfg, val, out, resume_state=state, history=history, vocab_hash=vocab_hash)
    final = out / "model.dnmt"
    save_model(result.model, final, vocab_hash, {"step": result.state.step})
    last = result.history[-1] if result.history else {}
    print(f"step {result.state.step} loss {last.get('loss', float('nan')):.4f} -> {final}")
    return EXIT_OK


def cmd_train(args) -> int:
    vocab = Vocab.load(args.vocab)
    model_vals, cfg = split_config(args)
    if args.resume_model:
        model, _ = load_model(args.resume_model)
    else:
        model = DocTransformer(model_config(len(vocab), model_vals), seed=cfg.seed)
    return _train_common(args, model, cfg, vocab.digest())


def cmd_finetune(args) -> int:
    vocab = Vocab.load(args.vocab)
    model_vals, cfg = split_config(args)
    baseline_path = args.baseline or cfg.finetune_from
    if not baseline_path:
        raise UsageError("finetune needs --baseline or finetune_from in the config")
    baseline, header = load_model(baseline_path)
    if header.get("vocab_hash") and header["vocab_hash"] != vocab.digest():
        raise VocabMismatch("baseline checkpoint was trained with a different vocabulary")
    base_cfg = baseline.config.to_dict()
    base_cfg.update({k: v for k, v in model_vals.items() if k != "variant"})
    variant, where, axis = parse_variant(args.variant)
    config = ModelConfig.from_dict(
        {**base_cfg, "variant": variant, "seq_emb_where": where, "vec_axis": axis,
         "concat_context": args.concat}
    )
    ctxlm = load_contextlm(args.ctxlm) if args.ctxlm else None
    if args.resume_model:
        model, _ = load_model(args.resume_model)
    else:
        model, fresh = warm_start(baseline, config, ctxlm=ctxlm, seed=cfg.seed)
        print(f"fresh parameters: {', '.join(fresh) or '(none)'}")
    return _train_common(args, model, cfg, vocab.digest())


def cmd_translate(args) -> int:
    codec = load_codec(args)
    model, _ = load_model(args.model)
    samples = load_samples(args.samples)
    hyps = translate(model, samples, codec, beam=args.beam, length_alpha=args.alpha)
    save_translations(args.out, hyps)
    print(f"{len(hyps)} translations -> {args.out}")
    return EXIT_OK


def cmd_backtranslate(args) -> int:
    codec = load_codec(args)
    model, _ = load_model(args.model)
    mono = load_documents(args.mono)
    synthetic = backtranslate(model, mono, codec, args.level, beam=args.beam, generator=file_digest(args.model)[:16],
                              context_kind=args.context_kind)
    synthetic.save(args.out_src, args.out_tgt)
    print(f"{len(synthetic.corpus)} documents, {synthetic.corpus.n_sentences} sentences ({synthetic.provenance})")
    return EXIT_OK


def cmd_eval_bleu(args) -> int:
    hyps, refs, _ = aligned_pair(args.hyp, args.ref)
    report = bleu(hyps, refs, mode=args.mode, lowercase=args.lowercase)
    if args.json:
        write_reports({"all": report}, args.json)
    print(f"{report.bleu:.2f}")
    return EXIT_OK


def cmd_eval_apt(args) -> int:
    lexicon = PronounLexicon.load(args.lexicon)
    srcs = _read_sentences(args.src)
    hyps = _read_sentences(args.hyp)
    refs = _read_sentences(args.ref)
    score = apt(srcs, hyps, refs, lexicon, load_alignments(args.align_hyp), load_alignments(args.align_ref))
    print("absent" if score is None else f"{score:.2f}")
    return EXIT_OK


def cmd_eval_contrastive(args) -> int:
    codec = load_codec(args)
    model, _ = load_model(args.model)
    acc = contrastive_eval(model, load_contrastive(args.instances), codec, args.kind)
    print(f"{acc:.2f}")
    return EXIT_OK


def cmd_split_eval(args) -> int:
    hyps = read_keyed(args.hyp)
    refs_docs = load_documents(args.ref)
    refs = {(d.id, i): s for d in refs_docs for i, s in enumerate(d.sentences)}
    headlines, body = split_headline_body(refs_docs)
    reports = split_eval(hyps, refs, {"headline": headlines, "body": body}, mode=args.mode)
    if args.json:
        write_reports(reports, args.json, args.text)
    sys.stdout.write(reports_table(reports))
    return EXIT_OK


def cmd_synth_gen(args) -> int:
    grammar = make_grammar(seed=args.seed, nouns_per_cell=args.nouns_per_cell)
    bundle = gen_corpus(grammar, n_docs=args.docs, sents_per_doc=args.sents_per_doc, n_test_docs=args.test_docs,
                        n_dev_docs=args.dev_docs, n_mono_docs=args.mono_docs)
    bundle.save(args.out)
    print(f"bundle with {len(bundle.train)} train documents -> {args.out}")
    return EXIT_OK


def cmd_synth_compare(args) -> int:
    bundle = SynthCorpusBundle.load(args.bundle)
    h = HarnessConfig(d_model=args.d_model, n_layers=args.layers, d_ff=2 * args.d_model, seed=args.seed,
                      beam=args.beam, bleu_docs=args.bleu_docs)
    h = replace(h, pretrain=replace(h.pretrain, max_steps=args.pretrain_steps))
    report = run_comparison(bundle, [v.strip() for v in args.variants.split(",") if v.strip()],
                            default_finetune(args.steps), h, bt=args.bt)
    report.save(args.out, args.text)
    sys.stdout.write(report.table())
    return EXIT_OK


def cmd_stats(args) -> int:
    docs = load_documents(args.input)
    n_sent, n_words, avg = corpus_stats(docs)
    print(f"documents {len(docs)}  sentences {n_sent}  words {n_words}  avg {avg}")
    return EXIT_OK


# ---------------------------------------------------------------- parser
def _codec_args(p):
    p.add_argument("--bpe", required=True, help="BPE merges file")
    p.add_argument("--vocab", required=True, help="vocabulary file")


def _train_args(p):
    p.add_argument("--samples", required=True)
    p.add_argument("--val-samples")
    p.add_argument("--vocab", required=True)
    p.add_argument("--config", help="key=value file with model and training settings")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume-model", help="checkpoint to resume from")
    p.add_argument("--resume-state", help="optimizer state saved with that checkpoint")


def build_parser() -> Parser:
    parser = Parser(prog="docnmt", description="Context-aware document translation toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--run-dir", default=None, help="run directory for the manifest (default: $DOCNMT_RUN_DIR)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)

    p = sub.add_parser("bpe-train", help="learn BPE merges and a vocabulary")
    p.add_argument("--input", action="append", required=True)
    p.add_argument("--merges", type=int, required=True)
    p.add_argument("--out-bpe", required=True)
    p.add_argument("--out-vocab", required=True)
    p.set_defaults(func=cmd_bpe_train, inputs=("input",))

    p = sub.add_parser("bpe-apply", help="segment sentences with a BPE model")
    p.add_argument("--bpe", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_bpe_apply, inputs=("bpe", "input"))

    p = sub.add_parser("make-samples", help="build context samples from a parallel corpus")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    _codec_args(p)
    p.add_argument("--kind", choices=SAMPLE_KINDS, default="sent")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_samples, inputs=("src", "tgt", "bpe", "vocab"))

    p = sub.add_parser("train", help="train a model from scratch")
    _train_args(p)
    p.set_defaults(func=cmd_train, inputs=("samples", "val_samples", "vocab", "config"))

    p = sub.add_parser("finetune", help="warm-start a context model from a baseline and train it")
    _train_args(p)
    p.add_argument("--baseline")
    p.add_argument("--variant", required=True, help="e.g. multi_in_par, seq_emb(e&d), single_vec(T)")
    p.add_argument("--concat", action="store_true", help="single-encoder input 'context BREAK current'")
    p.add_argument("--ctxlm", help="pretrained context LM checkpoint")
    p.set_defaults(func=cmd_finetune, inputs=("samples", "val_samples", "vocab", "config", "baseline", "ctxlm"))

    p = sub.add_parser("translate", help="beam-search translation of samples")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", required=True)
    _codec_args(p)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.6, help="length-normalisation exponent")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_translate, inputs=("model", "samples", "bpe", "vocab"))

    p = sub.add_parser("backtranslate", help="synthesise source documents from target monolingual documents")
    p.add_argument("--model", required=True, help="reverse (target-to-source) model")
    p.add_argument("--mono", required=True)
    _codec_args(p)
    p.add_argument("--level", choices=("sent", "doc"), required=True)
    p.add_argument("--context-kind", choices=("2to1", "2to2"), default="2to1")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--out-src", required=True)
    p.add_argument("--out-tgt", required=True)
    p.set_defaults(func=cmd_backtranslate, inputs=("model", "mono", "bpe", "vocab"))

    p = sub.add_parser("eval-bleu", help="corpus BLEU of hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--mode", choices=("word", "char"), default="word")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--json")
    p.set_defaults(func=cmd_eval_bleu, inputs=("hyp", "ref"))

    p = sub.add_parser("eval-apt", help="accuracy of pronoun translation")
    for name in ("src", "hyp", "ref", "lexicon", "align-hyp", "align-ref"):
        p.add_argument(f"--{name}", required=True)
    p.set_defaults(func=cmd_eval_apt, inputs=("src", "hyp", "ref", "lexicon", "align_hyp", "align_ref"))

    p = sub.add_parser("eval-contrastive", help="contrastive pronoun accuracy")
    p.add_argument("--model", required=True)
    p.add_argument("--instances", required=True)
    _codec_args(p)
    p.add_argument("--kind", choices=("sent", "2to1", "2to2", "3to1"), default="2to1")
    p.set_defaults(func=cmd_eval_contrastive, inputs=("model", "instances", "bpe", "vocab"))

    p = sub.add_parser("split-eval", help="BLEU per headline/body split")
    p.add_argument("--hyp", required=True, help="translation JSONL")
    p.add_argument("--ref", required=True, help="reference documents JSONL")
    p.add_argument("--mode", choices=("word", "char"), default="word")
    p.add_argument("--json")
    p.add_argument("--text")
    p.set_defaults(func=cmd_split_eval, inputs=("hyp", "ref"))

    p = sub.add_parser("synth-gen", help="generate a synthetic discourse bundle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--docs", type=int, default=200)
    p.add_argument("--test-docs", type=int, default=50)
    p.add_argument("--dev-docs", type=int, default=20)
    p.add_argument("--mono-docs", type=int, default=200)
    p.add_argument("--sents-per-doc", type=int, default=12)
    p.add_argument("--nouns-per-cell", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_gen, inputs=())

    p = sub.add_parser("synth-compare", help="equal-budget comparison of variants on a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--variants", default="baseline,2to2,multi_in_par")
    p.add_argument("--steps", type=int, default=800, help="fine-tuning steps per variant")
    p.add_argument("--pretrain-steps", type=int, default=1500)
    p.add_argument("--d-model", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--bleu-docs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bt", action="store_true", help="also run the back-translation experiment")
    p.add_argument("--out", required=True)
    p.add_argument("--text")
    p.set_defaults(func=cmd_synth_compare, inputs=())

    p = sub.add_parser("stats", help="sentence and word counts of a document file")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_stats, inputs=("input",))
    return parser


def _manifest(args, argv: Sequence[str]) -> RunManifest:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "inputs") and not callable(v)}
    paths = []
    for name in args.inputs:
        v = getattr(args, name, None)
        paths.extend(v if isinstance(v, list) else [v])
    inputs = _digest_inputs(paths)
    ckpts = {k: v for k, v in inputs.items() if k.endswith(".dnmt")}
    return RunManifest(args.command, list(argv), config, inputs, ckpts, getattr(args, "seed", None))


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    run_dir = args.run_dir or default_run_dir()
    func: Callable = args.func
    try:
        if run_dir:
            with locked_run_dir(run_dir) as d:
                _manifest(args, argv).save(d)
                return func(args)
        return func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"docnmt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"docnmt: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
