import itertools

import numpy as np
import pytest

from docnmt.architectures import ConfigError, DocTransformer
from docnmt.corpus import BOS_ID, BREAK_ID, EOS_ID, ContextSample, Document
from docnmt.decoding import (
    NEVER_EMIT,
    SyntheticCorpus,
    Translation,
    backtranslate,
    beam_search,
    default_max_len,
    diagnostics,
    greedy,
    length_penalty,
    load_translations,
    save_translations,
    score_sequence,
    score_sequences,
    split_2to2,
    translate,
)
from docnmt.decoding import search
from helpers import make_model, tiny_config, toy_sample

WORDS = (8, 9, 10, 11)
ALLOWED = (EOS_ID,) + WORDS


def exhaustive_best(model, sample, max_len):
    """Highest-probability EOS-terminated sequence over the allowed tokens."""
    cands = []
    for n in range(0, max_len):
        for body in itertools.product(WORDS, repeat=n):
            cands.append((BOS_ID,) + body + (EOS_ID,))
    scores = score_sequences(model, sample, cands)
    return cands[int(np.argmax(scores))], float(scores.max())


def step_log_prob(model, sample, prefix, token):
    s = ContextSample(sample.src_current, sample.src_context, tuple(prefix[1:]), None, sample.kind,
                      sample.doc_id, sample.sent_index)
    logits = model.sample_logits(s).data[len(prefix) - 1].astype(np.float64)
    logits -= logits.max()
    return float(logits[token] - np.log(np.exp(logits).sum()))


class TestBeam:
    def test_beam_one_equals_greedy(self, rng):
        model = make_model(seed=3)
        for i in range(5):
            s = toy_sample(rng, kind="sent", idx=i)
            g = greedy(model, s, max_len=6)
            b = beam_search(model, s, beam=1, max_len=6, length_alpha=0.0)[0]
            assert b.tokens == g.tokens
            assert b.log_prob == pytest.approx(g.log_prob, abs=1e-9)

    def test_full_width_beam_is_exhaustive(self, rng):
        model = make_model(seed=11)
        for i in range(10):
            s = toy_sample(rng, kind="sent", idx=i)
            best, score = exhaustive_best(model, s, 4)
            top = beam_search(model, s, beam=5 ** 4, max_len=4, length_alpha=0.0, allowed_tokens=ALLOWED)[0]
            assert top.tokens == best
            assert top.log_prob == pytest.approx(score, abs=1e-6)

    def test_log_prob_matches_rescoring(self, rng):
        model = make_model(seed=2)
        s = toy_sample(rng, kind="sent")
        for h in beam_search(model, s, beam=4, max_len=5):
            if h.finished:
                assert score_sequence(model, s, h.tokens) == pytest.approx(h.log_prob, abs=1e-5)

    def test_sorted_by_normalised_score(self, rng):
        hyps = beam_search(make_model(seed=2), toy_sample(rng, kind="sent"), beam=4, max_len=5, length_alpha=0.6)
        scores = [h.score(0.6) for h in hyps]
        assert scores == sorted(scores, reverse=True)

    def test_never_emits_reserved(self, rng):
        model = make_model(seed=6)
        for h in beam_search(model, toy_sample(rng, kind="sent"), beam=6, max_len=5):
            assert not set(h.tokens[1:]) & set(NEVER_EMIT)

    def test_forced_finish_flagged(self, rng):
        model = make_model(seed=6)
        hyps = beam_search(model, toy_sample(rng, kind="sent"), beam=2, max_len=1, allowed_tokens=(EOS_ID, 8))
        assert all(h.finished or h.forced for h in hyps)

    def test_cheap_early_finishes_do_not_stop_search(self, rng, monkeypatch):
        # the likely path ends after six words; early EOS expansions are improbable but enter the beam
        def step(model, mem, prefixes):
            lp = np.full((len(prefixes), model.config.vocab_size), -50.0)
            for i, p in enumerate(prefixes):
                done = len(p) > 6
                lp[i, EOS_ID] = -0.01 if done else -5.0
                lp[i, 8] = -8.0 if done else -0.01
            return lp

        monkeypatch.setattr(search, "_step_log_probs", step)
        top = beam_search(make_model(), toy_sample(rng, kind="sent"), beam=2, max_len=10, length_alpha=0.0)[0]
        assert top.tokens == (BOS_ID,) + (8,) * 6 + (EOS_ID,)

    def test_eos_required(self, rng):
        with pytest.raises(ValueError):
            beam_search(make_model(), toy_sample(rng, kind="sent"), allowed_tokens=(8, 9))

    def test_bad_beam(self, rng):
        with pytest.raises(ValueError):
            beam_search(make_model(), toy_sample(rng, kind="sent"), beam=0)

    def test_default_max_len(self, rng):
        model = make_model()
        s = ContextSample((8, 9, 10), (), (), None, "sent", "d", 0)
        assert default_max_len(model, s) == 16

    def test_length_penalty(self):
        assert length_penalty(1, 0.6) == 1.0
        assert length_penalty(7, 1.0) == 2.0
        assert length_penalty(30, 0.0) == 1.0


class TestScoring:
    def test_product_of_conditionals(self, rng):
        model = make_model(seed=8)
        s = toy_sample(rng, kind="sent")
        target = (BOS_ID, 12, 9, 15, EOS_ID)
        total = sum(step_log_prob(model, s, target[:k], target[k]) for k in range(1, len(target)))
        assert score_sequence(model, s, target) == pytest.approx(total, abs=1e-5)

    def test_batched_matches_single(self, rng):
        model = make_model(seed=8)
        s = toy_sample(rng, kind="sent")
        targets = [(BOS_ID, 9, EOS_ID), (BOS_ID, 12, 13, 14, EOS_ID)]
        batched = score_sequences(model, s, targets)
        for t, b in zip(targets, batched):
            assert score_sequence(model, s, t) == pytest.approx(b, abs=1e-5)

    def test_target_format_checked(self, rng):
        with pytest.raises(ValueError):
            score_sequence(make_model(), toy_sample(rng, kind="sent"), (9, 10))


class TestSplit:
    def test_after_break(self):
        assert split_2to2([BOS_ID, 8, 9, BREAK_ID, 10, 11, EOS_ID]) == [10, 11]

    def test_no_break_keeps_all_and_counts(self):
        before = diagnostics["split_2to2_no_break"]
        assert split_2to2([BOS_ID, 8, 9, EOS_ID]) == [8, 9]
        assert diagnostics["split_2to2_no_break"] == before + 1

    def test_last_break_wins(self):
        assert split_2to2([8, BREAK_ID, 9, BREAK_ID, 10]) == [10]


class TestTranslate:
    def test_translations_round_trip(self, tmp_path, toy_docs, toy_codec):
        from docnmt.corpus import build_context_samples

        model = DocTransformer(tiny_config(vocab=len(toy_codec.vocab)), seed=0)
        samples = build_context_samples(toy_docs, "sent", toy_codec)
        out = translate(model, samples, toy_codec, beam=2)
        assert [(t.doc_id, t.index) for t in out] == [(s.doc_id, s.sent_index) for s in samples]
        save_translations(tmp_path / "h.jsonl", out)
        back = load_translations(tmp_path / "h.jsonl")
        assert back == [t.to_json() for t in out]

    def test_json_shape(self):
        t = Translation("d", 2, (8,), "x", -1.5)
        assert t.to_json() == {"doc": "d", "index": 2, "hyp": "x", "score": -1.5}


class TestBacktranslate:
    @pytest.fixture
    def mono(self, toy_docs):
        return list(toy_docs.target_docs)

    def test_doc_level_structure(self, mono, toy_codec, tmp_path):
        model = DocTransformer(tiny_config("multi_in_par", vocab=len(toy_codec.vocab)), seed=0)
        bt = backtranslate(model, mono, toy_codec, "doc", beam=2, generator="rev")
        assert bt.provenance == "doc_bt"
        assert len(bt.corpus) == len(mono)
        for pseudo, real in zip(bt.corpus.source_docs, mono):
            assert pseudo.id == real.id and len(pseudo) == len(real)
            assert pseudo.title is None
        assert bt.corpus.target_docs == tuple(mono)
        bt.save(tmp_path / "s.jsonl", tmp_path / "t.jsonl")
        back = SyntheticCorpus.load(tmp_path / "s.jsonl", tmp_path / "t.jsonl")
        assert back.provenance == "doc_bt" and back.generator == "rev"

    def test_sent_level(self, mono, toy_codec):
        model = DocTransformer(tiny_config(vocab=len(toy_codec.vocab)), seed=0)
        bt = backtranslate(model, mono, toy_codec, "sent", beam=2)
        assert bt.provenance == "sent_bt"
        assert [len(d) for d in bt.corpus.source_docs] == [len(d) for d in mono]

    def test_doc_level_needs_context_model(self, mono, toy_codec):
        model = DocTransformer(tiny_config(vocab=len(toy_codec.vocab)), seed=0)
        with pytest.raises(ConfigError):
            backtranslate(model, mono, toy_codec, "doc")

    def test_bad_level(self, mono, toy_codec):
        with pytest.raises(ValueError):
            backtranslate(make_model(), mono, toy_codec, "para")

    def test_single_sentence_doc(self, toy_codec):
        model = DocTransformer(tiny_config("multi_in_par", vocab=len(toy_codec.vocab)), seed=0)
        bt = backtranslate(model, [Document("z", ("er bellte .",))], toy_codec, "doc", beam=1)
        assert len(bt.corpus.source_docs[0]) == 1
