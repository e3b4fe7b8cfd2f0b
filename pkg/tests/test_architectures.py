import numpy as np
import pytest

from docnmt import numkernel as nk
from docnmt.architectures import (
    VARIANTS,
    CheckpointError,
    ConfigError,
    ContextLM,
    ContextLMConfig,
    DocTransformer,
    ModelConfig,
    VocabMismatch,
    count_params,
    encode,
    forward_in_par,
    forward_multi_out,
    forward_seq_emb,
    gate_combine,
    load_contextlm,
    load_model,
    parse_variant,
    random_vec_context,
    save_contextlm,
    save_model,
    single_vec_context,
)
from docnmt.architectures.contextlm import masked_accuracy, pretrain_context_lm
from docnmt.corpus import DOCSTART_ID, ContextSample, Document, TextCodec
from docnmt.numkernel import Parameter, Tensor
from helpers import make_model, tiny_config, toy_sample

ALL_VARIANTS = [
    "baseline",
    "multi_out",
    "multi_in_seq",
    "multi_in_par",
    "wordemb_in_par",
    "seq_emb(e)",
    "seq_emb(d)",
    "seq_emb(e&d)",
    "single_vec(T)",
    "single_vec(F)",
    "random_vec(T)",
]
GATED = ["multi_out", "multi_in_seq", "multi_in_par", "wordemb_in_par", "seq_emb(e)", "seq_emb(d)", "seq_emb(e&d)"]


@pytest.fixture(scope="module")
def ctxlm():
    return ContextLM(ContextLMConfig(vocab_size=23, n_layers=1, d_model=8, d_ff=16, n_heads=2), seed=3)


def gate_oracle(h, c, W_g, b_g, W_s, W_c):
    out = np.empty_like(h)
    for i in range(h.shape[0]):
        z = np.concatenate([h[i], c[i]]) @ W_g + b_g
        g = 1.0 / (1.0 + np.exp(-z))
        out[i] = g * (h[i] @ W_s) + (1.0 - g) * (c[i] @ W_c)
    return out


def gate_params(W_g, b_g, W_s, W_c):
    return {f"g.{k}": Parameter(v, k) for k, v in dict(W_g=W_g, b_g=b_g, W_s=W_s, W_c=W_c).items()}


class TestGate:
    def test_equal_mix(self):
        with nk.precision(np.float64):
            p = gate_params(np.zeros((4, 2)), np.zeros(2), np.eye(2), np.eye(2))
            out = gate_combine(Tensor([[1.0, 0.0]]), Tensor([[0.0, 1.0]]), p, "g")
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_saturated_bias_passes_source(self, rng):
        with nk.precision(np.float64):
            h, c = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
            p = gate_params(np.zeros((8, 4)), np.full(4, 10.0), np.eye(4), rng.normal(size=(4, 4)))
            out = gate_combine(Tensor(h), Tensor(c), p, "g").data
        expected = h + (1 - 1 / (1 + np.exp(-10.0))) * (c @ p["g.W_c"].data - h)
        np.testing.assert_allclose(out, expected, rtol=1e-12)
        assert np.max(np.abs(out - h) / np.maximum(np.abs(h), 1.0)) < 1e-3

    def test_matches_straight_line_oracle(self, rng):
        with nk.precision(np.float64):
            h, c = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
            raw = dict(W_g=rng.normal(size=(12, 6)), b_g=rng.normal(size=6), W_s=rng.normal(size=(6, 6)),
                       W_c=rng.normal(size=(6, 6)))
            out = gate_combine(Tensor(h), Tensor(c), gate_params(**raw), "g").data
        np.testing.assert_allclose(out, gate_oracle(h, c, **raw), rtol=1e-6)

    def test_shape_mismatch(self):
        p = gate_params(np.zeros((4, 2)), np.zeros(2), np.eye(2), np.eye(2))
        with pytest.raises(nk.DimensionError):
            gate_combine(Tensor(np.ones((1, 2))), Tensor(np.ones((2, 2))), p, "g")

    def test_init_identity_and_bias(self):
        model = make_model("multi_in_par")
        np.testing.assert_array_equal(model.params["dec.0.gate.W_s"].data, np.eye(8))
        np.testing.assert_array_equal(model.params["dec.0.gate.b_g"].data, np.full(8, 2.0))


class TestConfig:
    def test_parse_variant(self):
        assert parse_variant("seq_emb(e&d)") == ("seq_emb", "e&d", None)
        assert parse_variant("single_vec(F)") == ("single_vec", None, "F")
        assert parse_variant("random_vec") == ("random_vec", None, "T")

    @pytest.mark.parametrize("bad", ["nope", "baseline(x)", "seq_emb(q)", "random_vec(F)", "single_vec(Z)"])
    def test_bad_variants(self, bad):
        with pytest.raises(ConfigError):
            tiny_config(bad)

    def test_heads_divide_width(self):
        with pytest.raises(ConfigError):
            ModelConfig(vocab_size=10, d_model=10, n_heads=3)

    def test_ctxlm_required(self):
        with pytest.raises(ConfigError):
            make_model("seq_emb(e)")

    def test_ctxlm_vocab_checked(self):
        lm = ContextLM(ContextLMConfig(vocab_size=30, n_layers=1, d_model=8, d_ff=16, n_heads=2))
        with pytest.raises(VocabMismatch):
            make_model("single_vec(T)", ctxlm=lm)

    def test_all_variants_listed(self):
        assert {parse_variant(v)[0] for v in ALL_VARIANTS} == set(VARIANTS)


class TestEncoder:
    def test_shape(self, rng):
        model = make_model()
        assert encode(model, [8, 9, 10]).shape == (3, 8)
        assert encode(model, [8]).shape == (1, 8)

    def test_zero_layers_is_embedding_plus_position(self):
        model = make_model(layers=0)
        ids = [8, 12, 9]
        emb = model.src_embedding.data[ids] * np.sqrt(8) + model._pe[:3]
        np.testing.assert_allclose(encode(model, ids).data, emb, rtol=1e-6)

    def test_self_attention_permutation_equivariant(self, rng):
        # with positions removed, permuting tokens permutes the states
        model = make_model()
        model._pe = np.zeros_like(model._pe)
        ids = [8, 12, 9, 15]
        perm = [2, 0, 3, 1]
        a = encode(model, ids).data
        b = encode(model, [ids[i] for i in perm]).data
        np.testing.assert_allclose(b, a[perm], rtol=1e-5, atol=1e-6)

    def test_overlong_input_truncated(self, caplog):
        model = make_model()
        out = encode(model, list(range(8, 23)) * 6)
        assert out.shape[0] == 64
        assert model.truncations == 1


class TestForward:
    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_logit_shape_with_docstart_context(self, variant, ctxlm, rng):
        model = make_model(variant, ctxlm=ctxlm)
        s = ContextSample((8, 9, 10), (DOCSTART_ID,), (11, 12), None, "2to1", "d", 0)
        assert model.sample_logits(s).shape == (3, 23)

    def test_baseline_ignores_context(self, rng):
        model = make_model()
        s = toy_sample(rng)
        plain = ContextSample(s.src_current, (), s.tgt_current, None, "sent", s.doc_id, 0)
        np.testing.assert_array_equal(model.sample_logits(s).data, model.sample_logits(plain).data)

    @pytest.mark.parametrize("variant", ["multi_out", "multi_in_par", "seq_emb(e)"])
    def test_missing_context_rejected(self, variant, ctxlm):
        model = make_model(variant, ctxlm=ctxlm)
        s = ContextSample((8, 9), (), (10,), None, "sent", "d", 0)
        with pytest.raises(nk.ContractViolation):
            model.sample_logits(s)

    def test_forward_helpers_check_variant(self, rng):
        model = make_model("multi_in_par")
        s = toy_sample(rng)
        np.testing.assert_array_equal(forward_in_par(model, s).data, model.sample_logits(s).data)
        with pytest.raises(ConfigError):
            forward_multi_out(model, s)

    def test_seq_emb_where_checked(self, ctxlm, rng):
        model = make_model("seq_emb(e)", ctxlm=ctxlm)
        with pytest.raises(ConfigError):
            forward_seq_emb(model, toy_sample(rng), where="d")

    def test_seq_emb_e_and_d_differ(self, ctxlm, rng):
        s = toy_sample(rng)
        e = make_model("seq_emb(e)", ctxlm=ctxlm).sample_logits(s).data
        d = make_model("seq_emb(d)", ctxlm=ctxlm).sample_logits(s).data
        assert not np.allclose(e, d)

    @pytest.mark.parametrize("variant", GATED)
    def test_saturated_gates_match_baseline(self, variant, ctxlm, rng):
        with nk.precision(np.float64):
            base = make_model("baseline", seed=5)
            ctx = make_model(variant, seed=9, ctxlm=ctxlm)
            for name, p in base.params.items():
                ctx.params[name].assign(p.data)
            ctx.saturate_gates("source")
            s = toy_sample(rng)
            np.testing.assert_allclose(ctx.sample_logits(s).data, base.sample_logits(s).data, rtol=1e-3, atol=1e-6)

    def test_f_axis_zero_projection_is_baseline(self, ctxlm, rng):
        with nk.precision(np.float64):
            base = make_model("baseline", seed=5)
            vec = make_model("single_vec(F)", seed=9, ctxlm=ctxlm)
            for name, p in base.params.items():
                vec.params[name].assign(p.data)
            w = vec.params["vec_proj.w"].data.copy()
            w[8:] = 0.0
            vec.params["vec_proj.w"].assign(w)
            s = toy_sample(rng)
            np.testing.assert_allclose(vec.sample_logits(s).data, base.sample_logits(s).data, rtol=1e-10)

    def test_t_axis_adds_pseudo_token(self, ctxlm, rng):
        model = make_model("single_vec(T)", ctxlm=ctxlm)
        batch = model.prepare([toy_sample(rng)])
        assert batch.src_mask.shape[1] == batch.src.shape[1] + 1


class TestContextVectors:
    def test_single_row_mean_is_row(self, ctxlm):
        inj = single_vec_context(ctxlm, [9])
        np.testing.assert_allclose(inj.vector, ctxlm.hidden_states([9])[0])

    def test_mean_pooling(self, ctxlm):
        inj = single_vec_context(ctxlm, [9, 10, 11], axis="F")
        np.testing.assert_allclose(inj.vector, ctxlm.hidden_states([9, 10, 11]).mean(0))
        assert inj.axis == "F"

    def test_empty_context_rejected(self, ctxlm):
        with pytest.raises(nk.ContractViolation):
            single_vec_context(ctxlm, [])

    def test_random_vec_deterministic(self):
        np.testing.assert_array_equal(random_vec_context(4, 8), random_vec_context(4, 8))
        assert not np.array_equal(random_vec_context(4, 8), random_vec_context(5, 8))

    def test_random_vec_statistics(self):
        draws = random_vec_context(0, 1_000_000)
        assert draws.min() >= -0.1 and draws.max() <= 0.1
        stderr = (0.2 / np.sqrt(12)) / np.sqrt(draws.size)
        assert abs(draws.mean()) < 3 * stderr

    def test_random_vec_per_sample(self):
        model = make_model("random_vec(T)")
        a = ContextSample((8,), (9,), (10,), None, "2to1", "d", 0)
        b = ContextSample((8,), (9,), (10,), None, "2to1", "d", 1)
        assert not np.array_equal(model.context_vector(a), model.context_vector(b))
        np.testing.assert_array_equal(model.context_vector(a), model.context_vector(a))


def expected_baseline_params(V, d, d_ff, L):
    attn = 4 * (d * d + d)
    ffn = 2 * d * d_ff + d_ff + d
    enc = attn + ffn + 2 * 2 * d
    dec = 2 * attn + ffn + 3 * 2 * d
    return V * d + L * (enc + dec) + d * V + V


class TestParamCounts:
    def test_baseline_closed_form(self):
        model = DocTransformer(ModelConfig(vocab_size=50, n_layers=3, d_model=16, d_ff=40, n_heads=4))
        assert count_params(model) == expected_baseline_params(50, 16, 40, 3)

    def test_base_size_formula(self):
        # base sizes, 32k joint vocab: 2*V*d + V for embeddings and the untied
        # output layer, 7,356,416 per encoder+decoder layer pair
        assert expected_baseline_params(32000, 512, 2048, 6) == 32_800_000 + 6 * 7_356_416

    def test_wordemb_smaller_than_in_par(self):
        assert make_model("wordemb_in_par").count_params() < make_model("multi_in_par").count_params()

    def test_unshared_embeddings_cost(self):
        shared = make_model("multi_in_par").count_params()
        unshared = make_model("multi_in_par", share_embeddings=False).count_params()
        assert unshared - shared == 2 * 23 * 8

    def test_shared_table_is_one_object(self):
        model = make_model()
        assert model.src_embedding is model.tgt_embedding


class TestCheckpoint:
    @pytest.mark.parametrize("variant", ["baseline", "multi_in_par", "single_vec(T)"])
    def test_round_trip_bit_exact(self, variant, ctxlm, rng, tmp_path):
        model = make_model(variant, seed=2, ctxlm=ctxlm)
        s = toy_sample(rng)
        save_model(model, tmp_path / "m.dnmt", vocab_hash="abc")
        back, header = load_model(tmp_path / "m.dnmt")
        assert header["vocab_hash"] == "abc"
        np.testing.assert_array_equal(back.sample_logits(s).data, model.sample_logits(s).data)

    def test_contextlm_round_trip(self, ctxlm, tmp_path):
        save_contextlm(ctxlm, tmp_path / "lm.dnmt")
        back = load_contextlm(tmp_path / "lm.dnmt")
        np.testing.assert_array_equal(back.hidden_states([8, 9]), ctxlm.hidden_states([8, 9]))

    def test_wrong_kind(self, ctxlm, tmp_path):
        save_contextlm(ctxlm, tmp_path / "lm.dnmt")
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "lm.dnmt")


class TestContextLM:
    def test_hidden_shape(self, ctxlm):
        assert ctxlm.hidden_states([8, 9, 10]).shape == (3, 8)

    def test_memorizes_repeated_sentence(self):
        sent = "ab cd ef gh"
        codec = TextCodec.train([sent], 0)
        docs = [Document(f"d{i}", (sent,) * 3) for i in range(8)]
        cfg = ContextLMConfig(vocab_size=len(codec.vocab), n_layers=1, d_model=16, d_ff=32, n_heads=2,
                              max_steps=300, batch_size=8, accuracy_floor=0.99, mask_prob=0.3)
        lm = pretrain_context_lm(docs, codec, cfg)
        seqs = [codec.encode(sent)] * 50
        assert masked_accuracy(lm, seqs, np.random.default_rng(0)) > 0.95

    def test_vocab_mismatch(self, toy_codec, toy_docs):
        with pytest.raises(VocabMismatch):
            pretrain_context_lm(toy_docs.source_docs, toy_codec, ContextLMConfig(vocab_size=3))
