"""Equal-budget comparison of context variants on a synthetic bundle."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from ..architectures import DocTransformer, ModelConfig
from ..architectures.config import parse_variant
from ..architectures.contextlm import ContextLM, ContextLMConfig, pretrain_context_lm
from ..corpus import (
    ContextSample,
    ParallelDocumentCorpus,
    TextCodec,
    atomic_write_text,
    build_context_samples,
)
from ..decoding import backtranslate, translate
from ..evaluation import bleu, contrastive_eval, format_table
from ..training import TrainConfig, evaluate_loss, train, warm_start
from .grammar import SynthCorpusBundle
from .oracle import agreement_rate

log = logging.getLogger(__name__)


class BudgetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SystemSpec:
    name: str
    variant: str  # model variant spec, e.g. "seq_emb(e&d)"
    kind: str  # sample kind used for training and evaluation
    concat: bool = False


# Single Encoder systems reuse the baseline network on concatenated input.
SINGLE_ENCODER = {"2to1": "2to1", "3to1": "3to1", "2to2": "2to2"}


def system_spec(name: str) -> SystemSpec:
    if name == "baseline":
        return SystemSpec(name, "baseline", "sent")
    if name in SINGLE_ENCODER:
        return SystemSpec(name, "baseline", SINGLE_ENCODER[name], concat=True)
    parse_variant(name)
    return SystemSpec(name, name, "2to1")


@dataclass(frozen=True)
class HarnessConfig:
    d_model: int = 32
    n_layers: int = 2
    d_ff: int = 64
    n_heads: int = 4
    max_positions: int = 96
    n_merges: int = 4000
    pretrain: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            warmup_steps=300, lr_scale=1.0, batch_tokens=1200, max_steps=1500, label_smoothing=0.0, log_every=100
        )
    )
    ctxlm_steps: int = 800
    beam: int = 5
    bleu_docs: int | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def model_config(self, vocab_size: int, spec: SystemSpec) -> ModelConfig:
        base = ModelConfig(
            vocab_size=vocab_size, n_layers=self.n_layers, d_model=self.d_model, d_ff=self.d_ff,
            n_heads=self.n_heads, max_positions=self.max_positions, random_seed=self.seed,
        )
        return base.with_variant(spec.variant, concat_context=spec.concat)


def default_finetune(steps: int = 800) -> TrainConfig:
    return TrainConfig(
        warmup_steps=300, lr_scale=1.0, batch_tokens=1200, max_steps=steps, label_smoothing=0.0, log_every=100
    )


def build_codec(bundle: SynthCorpusBundle, n_merges: int = 4000) -> TextCodec:
    sentences = []
    for corpus in (bundle.train, bundle.dev):
        for s, t in corpus.pairs():
            sentences += list(s.sentences) + list(t.sentences)
    for d in list(bundle.mono_src) + list(bundle.mono_tgt):
        sentences += list(d.sentences)
    return TextCodec.train(sentences, n_merges)


def _check_budgets(cfgs: Mapping[str, TrainConfig]) -> None:
    budgets = {name: (c.max_steps, c.batch_tokens) for name, c in cfgs.items()}
    if len(set(budgets.values())) > 1:
        raise BudgetMismatch(f"variants must share (max_steps, batch_tokens); got {budgets}")


class Workbench:
    """Shared state of one harness run: codec, pretrained baseline, context LM."""

    def __init__(self, bundle: SynthCorpusBundle, harness: HarnessConfig, reverse: bool = False):
        self.bundle = bundle
        self.harness = harness
        self.reverse = reverse
        self.codec = build_codec(bundle, harness.n_merges)
        self.vocab_size = len(self.codec.vocab)
        self._samples: dict[tuple[str, str], list[ContextSample]] = {}
        self._baseline: DocTransformer | None = None
        self._ctxlm: ContextLM | None = None
        self.timings: dict[str, float] = {}

    def corpus(self, split: str) -> ParallelDocumentCorpus:
        c = getattr(self.bundle, split)
        return c.reversed() if self.reverse else c

    def samples(self, split: str, kind: str) -> list[ContextSample]:
        key = (split, kind)
        if key not in self._samples:
            self._samples[key] = build_context_samples(self.corpus(split), kind, self.codec)
        return self._samples[key]

    def baseline(self) -> DocTransformer:
        if self._baseline is None:
            t = time.perf_counter()
            h = self.harness
            model = DocTransformer(h.model_config(self.vocab_size, system_spec("baseline")), seed=h.seed)
            train(model, self.samples("train", "sent"), replace(h.pretrain, seed=h.seed))
            self._baseline = model
            self.timings["pretrain"] = time.perf_counter() - t
        return self._baseline

    def ctxlm(self) -> ContextLM:
        if self._ctxlm is None:
            t = time.perf_counter()
            h = self.harness
            docs = self.bundle.mono_tgt if self.reverse else self.bundle.mono_src
            cfg = ContextLMConfig(
                vocab_size=self.vocab_size, n_layers=h.n_layers, d_model=h.d_model, d_ff=h.d_ff,
                n_heads=h.n_heads, max_positions=h.max_positions, max_steps=h.ctxlm_steps, seed=h.seed,
            )
            self._ctxlm = pretrain_context_lm(docs, self.codec, cfg)
            self.timings["ctxlm"] = time.perf_counter() - t
        return self._ctxlm

    def finetune(
        self, spec: SystemSpec, cfg: TrainConfig, extra: ParallelDocumentCorpus | None = None
    ) -> tuple[DocTransformer, float]:
        """Warm-start ``spec`` from the baseline and train it; returns (model, dev loss)."""
        h = self.harness
        config = h.model_config(self.vocab_size, spec)
        ctxlm = self.ctxlm() if config.needs_ctxlm else None
        model, _ = warm_start(self.baseline(), config, ctxlm=ctxlm, seed=h.seed + 1)
        data = list(self.samples("train", spec.kind))
        if extra is not None:
            data += build_context_samples(extra, spec.kind, self.codec)
        t = time.perf_counter()
        train(model, data, replace(cfg, seed=h.seed))
        self.timings[f"finetune:{spec.name}"] = time.perf_counter() - t
        return model, evaluate_loss(model, self.samples("dev", spec.kind), cfg.batch_tokens)

    def evaluate(self, model: DocTransformer, spec: SystemSpec) -> dict:
        t = time.perf_counter()
        acc = contrastive_eval(model, self.bundle.contrastive, self.codec, spec.kind)
        test = self.samples("test", spec.kind)
        if self.harness.bleu_docs is not None:
            keep = {d.id for d in self.corpus("test").source_docs[: self.harness.bleu_docs]}
            test = [s for s in test if s.doc_id in keep]
        hyps = translate(model, test, self.codec, beam=self.harness.beam)
        targets = {d.id: d for d in self.corpus("test").target_docs}
        refs = [targets[s.doc_id].sentences[s.sent_index] for s in test]
        report = bleu([h.text for h in hyps], refs)
        self.timings[f"eval:{spec.name}"] = time.perf_counter() - t
        return {
            "system": spec.name,
            "bleu": report.bleu,
            "contrastive_accuracy": acc,
            "token_delta": report.token_delta,
            "hyp_tokens": report.hyp_tokens,
            "ref_tokens": report.ref_tokens,
        }


@dataclass
class ComparisonReport:
    rows: list[dict]
    bt: dict | None = None
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def row(self, system: str) -> dict:
        for r in self.rows:
            if r["system"] == system:
                return r
        raise KeyError(system)

    def to_json(self) -> dict:
        return {"rows": self.rows, "bt": self.bt, "config": self.config, "timings": self.timings}

    @classmethod
    def from_json(cls, obj: dict) -> "ComparisonReport":
        return cls(obj["rows"], obj.get("bt"), obj.get("config", {}), obj.get("timings", {}))

    def table(self) -> str:
        text = format_table(
            self.rows, ("system", "bleu", "contrastive_accuracy", "token_delta", "dev_loss", "steps")
        )
        if self.bt:
            rows = [{"quantity": k, "value": v} for k, v in self.bt.items()]
            text += "\n" + format_table(rows, ("quantity", "value"))
        return text

    def save(self, json_path, text_path=None) -> None:
        atomic_write_text(json_path, json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")
        if text_path is not None:
            atomic_write_text(text_path, self.table())

    @classmethod
    def load(cls, path) -> "ComparisonReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def run_bt_experiment(
    bench: Workbench,
    cfg: TrainConfig,
    context_system: str = "multi_in_par",
    n_mono_docs: int | None = None,
) -> dict:
    """Sentence- vs document-level back-translation of the target monolingual documents.

    Reverse models (target to source) are trained with the same protocol as the
    forward systems. The forward baseline is then fine-tuned on real + sentence-
    level synthetic data and the forward context model on real + document-level
    synthetic data.
    """
    h = bench.harness
    bundle = bench.bundle
    mono = list(bundle.mono_tgt[:n_mono_docs] if n_mono_docs else bundle.mono_tgt)
    rev = Workbench(bundle, h, reverse=True)
    rev.codec = bench.codec
    rev.vocab_size = bench.vocab_size
    ctx_spec = system_spec(context_system)
    rev_base, _ = rev.finetune(system_spec("baseline"), cfg)
    rev_ctx, _ = rev.finetune(ctx_spec, cfg)

    t = time.perf_counter()
    sent_bt = backtranslate(rev_base, mono, bench.codec, "sent", beam=h.beam, generator="reverse-baseline")
    doc_bt = backtranslate(rev_ctx, mono, bench.codec, "doc", beam=h.beam, generator=f"reverse-{context_system}",
                           context_kind="2to2" if ctx_spec.kind == "2to2" else "2to1")
    bench.timings["bt_generate"] = time.perf_counter() - t
    bench.timings.update({f"reverse:{k}": v for k, v in rev.timings.items()})

    structure_ok = all(
        len(bt.corpus) == len(mono)
        and all(len(p) == len(m) and p.id == m.id for p, m in zip(bt.corpus.source_docs, mono))
        for bt in (sent_bt, doc_bt)
    )
    g = bundle.grammar
    base_model, _ = bench.finetune(replace(system_spec("baseline"), name="baseline+sent_bt"), cfg, sent_bt.corpus)
    ctx_model, _ = bench.finetune(replace(ctx_spec, name=f"{context_system}+doc_bt"), cfg, doc_bt.corpus)
    return {
        "mono_docs": len(mono),
        "structure_preserved": structure_ok,
        "agreement_sent_bt": agreement_rate(g, sent_bt.corpus.source_docs),
        "agreement_doc_bt": agreement_rate(g, doc_bt.corpus.source_docs),
        "agreement_reference": agreement_rate(g, bundle.mono_src),
        "contrastive_baseline_sent_bt": contrastive_eval(base_model, bundle.contrastive, bench.codec, "sent"),
        "contrastive_context_doc_bt": contrastive_eval(ctx_model, bundle.contrastive, bench.codec, ctx_spec.kind),
    }


def run_comparison(
    bundle: SynthCorpusBundle,
    variants: Sequence[str],
    train_cfg: TrainConfig | Mapping[str, TrainConfig] | None = None,
    harness: HarnessConfig | None = None,
    bt: bool = False,
    bt_context_system: str = "multi_in_par",
    bt_mono_docs: int | None = None,
) -> ComparisonReport:
    """Fine-tune every variant from one pretrained baseline on an identical budget.

    The ``baseline`` row continues sentence-level training for the same number
    of steps, so all systems see the same amount of optimisation.
    """
    harness = harness or HarnessConfig()
    if not variants:
        raise ValueError("no variants to compare")
    if train_cfg is None:
        train_cfg = default_finetune()
    if isinstance(train_cfg, TrainConfig):
        cfgs = {v: train_cfg for v in variants}
    else:
        missing = [v for v in variants if v not in train_cfg]
        if missing:
            raise ValueError(f"no training config for {missing}")
        cfgs = {v: train_cfg[v] for v in variants}
    _check_budgets(cfgs)
    specs = [system_spec(v) for v in variants]

    bench = Workbench(bundle, harness)
    rows = []
    for spec in specs:
        model, dev_loss = bench.finetune(spec, cfgs[spec.name])
        row = bench.evaluate(model, spec)
        row["dev_loss"] = dev_loss
        row["steps"] = cfgs[spec.name].max_steps
        rows.append(row)
        log.info("%s: %s", spec.name, row)
    bt_result = None
    if bt:
        bt_result = run_bt_experiment(bench, next(iter(cfgs.values())), bt_context_system, bt_mono_docs)
    config = {"harness": harness.to_dict(), "finetune": {k: c.to_dict() for k, c in cfgs.items()},
              "vocab_size": bench.vocab_size}
    return ComparisonReport(rows, bt_result, config, dict(bench.timings))
