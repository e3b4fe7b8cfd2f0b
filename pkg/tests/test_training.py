import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docnmt import numkernel as nk
from docnmt.architectures import ConfigError, load_model, save_model
from docnmt.numkernel import Parameter
from docnmt.training import (
    AdamState,
    ConfigFileError,
    NonFiniteGradient,
    TrainConfig,
    TrainingError,
    TrainState,
    adam_step,
    check_compatibility,
    dump_kv,
    evaluate_loss,
    from_kv,
    load_kv,
    make_buckets,
    noam_lr,
    parse_kv,
    resume,
    save_kv,
    train,
    warm_start,
)
from helpers import make_model, tiny_config, toy_sample


def toy_data(seed=0, n=12, kind="2to1"):
    rng = np.random.default_rng(seed)
    return [toy_sample(rng, kind=kind, idx=i) for i in range(n)]


def quick_cfg(**kw):
    base = dict(warmup_steps=10, lr_scale=1.0, batch_tokens=40, max_steps=12, label_smoothing=0.0, log_every=1)
    base.update(kw)
    return TrainConfig(**base)


class TestSchedule:
    def test_closed_form(self):
        assert noam_lr(4000, 4000, 512, 1.0) == pytest.approx(6.988e-4, rel=1e-3)

    @settings(max_examples=50)
    @given(st.integers(1, 10_000), st.sampled_from([8, 64, 512]), st.floats(0.1, 4.0))
    def test_crossover_at_warmup(self, warmup, d, scale):
        both = scale * d ** -0.5 * warmup ** -0.5
        assert noam_lr(warmup, warmup, d, scale) == pytest.approx(both, rel=1e-12)

    @settings(max_examples=50)
    @given(st.integers(2, 2000))
    def test_rises_then_falls(self, warmup):
        assert noam_lr(warmup - 1, warmup, 32) < noam_lr(warmup, warmup, 32)
        assert noam_lr(warmup + 1, warmup, 32) < noam_lr(warmup, warmup, 32)

    def test_step_zero_rejected(self):
        with pytest.raises(ValueError):
            noam_lr(0, 100, 32)


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Parameter(np.array([1.0, -2.0]), "p")
        before = p.data.copy()
        adam_step([p], AdamState.create([p]), lr=0.1)
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_moves_by_lr(self):
        with nk.precision(np.float64):
            p = Parameter(np.array([0.5]), "p")
        p.grad = np.array([1.0])
        st_ = AdamState.create([p], beta1=0.9, beta2=0.999, eps=1e-8)
        adam_step([p], st_, lr=0.01)
        assert p.data[0] == pytest.approx(0.5 - 0.01, abs=1e-9)

    def test_nan_names_parameter(self):
        p = Parameter(np.zeros(2), "enc.0.w")
        p.grad = np.array([np.nan, 0.0])
        with pytest.raises(NonFiniteGradient, match="enc.0.w"):
            adam_step([p], AdamState.create([p]), lr=0.1)


class TestBatching:
    def test_buckets_cover_all_within_budget(self):
        model = make_model()
        data = toy_data(n=30)
        buckets = make_buckets(model, data, 40)
        assert sorted(i for b in buckets for i in b) == list(range(30))
        for b in buckets:
            width = max(max(len(model.source_ids(data[i])), len(model.target_ids(data[i])) + 1) for i in b)
            assert width * len(b) <= 40

    def test_budget_below_longest_rejected(self):
        with pytest.raises(TrainingError):
            make_buckets(make_model(), toy_data(), 3)

    def test_incompatible_kind_rejected(self):
        with pytest.raises(TrainingError, match="needs source context"):
            check_compatibility(tiny_config("multi_in_par"), toy_data(kind="sent"))

    def test_empty_rejected(self):
        with pytest.raises(TrainingError):
            check_compatibility(tiny_config(), [])


class TestTrain:
    def test_loss_decreases(self):
        data = toy_data()
        model = make_model()
        before = evaluate_loss(model, data)
        train(model, data, quick_cfg(max_steps=60))
        assert evaluate_loss(model, data) < before

    def test_same_seed_bit_identical(self):
        runs = []
        for _ in range(2):
            model = make_model(seed=4)
            train(model, toy_data(), quick_cfg())
            runs.append({n: p.data.copy() for n, p in model.params.items()})
        for name in runs[0]:
            np.testing.assert_array_equal(runs[0][name], runs[1][name])

    def test_resume_bit_identical(self, tmp_path):
        data = toy_data()
        full = make_model(seed=1)
        ref = train(full, data, quick_cfg(max_steps=12))
        part = make_model(seed=1)
        train(part, data, quick_cfg(max_steps=6, checkpoint_every=6), out_dir=tmp_path)
        cont = resume(tmp_path / "ckpt_0000006.dnmt", tmp_path / "state_0000006.npz", data, quick_cfg(max_steps=12))
        assert [r["loss"] for r in cont.history] == [r["loss"] for r in ref.history[6:]]
        for name, p in full.params.items():
            np.testing.assert_array_equal(cont.model.params[name].data, p.data)

    def test_log_and_checkpoints_written(self, tmp_path):
        res = train(make_model(), toy_data(), quick_cfg(max_steps=4, checkpoint_every=2), val_samples=toy_data(9, 4),
                    out_dir=tmp_path)
        assert len(res.checkpoints) == 2
        rows = [json.loads(x) for x in (tmp_path / "train_log.jsonl").read_text().splitlines()]
        assert [r["step"] for r in rows] == [1, 2, 3, 4]
        assert rows[1]["val_loss"] is not None and rows[0]["val_loss"] is None
        assert res.state.best_val_loss <= rows[1]["val_loss"]

    def test_state_round_trip(self, tmp_path):
        res = train(make_model(), toy_data(), quick_cfg(max_steps=3))
        res.state.save(tmp_path / "s.npz")
        back = TrainState.load(tmp_path / "s.npz")
        assert back.step == 3 and back.adam.step == 3
        for k, v in res.state.adam.m.items():
            np.testing.assert_array_equal(back.adam.m[k], v)


class TestWarmStart:
    def test_fresh_parameters_for_in_par(self):
        base = make_model(layers=1)
        model, fresh = warm_start(base, tiny_config("multi_in_par", layers=1))
        assert fresh == sorted(
            [f"dec.0.ctx_attn.{w}{x}" for w in "bw" for x in "qkvo"]
            + [f"dec.0.gate.{x}" for x in ("W_c", "W_g", "W_s", "b_g")]
        )
        np.testing.assert_array_equal(model.params["ctx_enc.0.self.wq"].data, base.params["enc.0.self.wq"].data)
        np.testing.assert_array_equal(model.params["embed.shared"].data, base.params["embed.shared"].data)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError, match="d_model"):
            warm_start(make_model(), tiny_config("multi_in_par", d=16))

    def test_shape_mismatch_lists_params(self):
        base = make_model()
        base.params["out.b"] = Parameter(np.zeros(5), "out.b")
        with pytest.raises(ConfigError, match="out.b"):
            warm_start(base, tiny_config("multi_in_par"))

    def test_gate_saturated_model_matches_baseline_loss(self, tmp_path):
        data = toy_data()
        with nk.precision(np.float64):
            base = make_model(seed=3)
            save_model(base, tmp_path / "b.dnmt")
            loaded, _ = load_model(tmp_path / "b.dnmt")
            model, _ = warm_start(loaded, tiny_config("multi_in_seq"))
            model.saturate_gates()
            assert evaluate_loss(model, data) == pytest.approx(evaluate_loss(base, data), rel=1e-6)


class TestConfigFiles:
    def test_kv_round_trip(self, tmp_path):
        cfg = TrainConfig(max_steps=7, label_smoothing=0.0, finetune_from="a/b.dnmt")
        save_kv(tmp_path / "c.kv", cfg.to_dict())
        assert from_kv(TrainConfig, load_kv(tmp_path / "c.kv")) == cfg

    def test_comments_and_blank_lines(self):
        assert parse_kv("# top\n\nmax_steps = 5  # inline\n") == {"max_steps": "5"}

    def test_unknown_key_strict(self):
        with pytest.raises(ConfigFileError):
            from_kv(TrainConfig, {"nope": "1"})

    def test_bad_line(self):
        with pytest.raises(ConfigFileError):
            parse_kv("just words")

    def test_bad_value(self):
        with pytest.raises(ConfigFileError):
            from_kv(TrainConfig, {"max_steps": "many"})

    def test_dump_skips_none_and_lowercases_bools(self):
        assert dump_kv({"b": 1, "a": None, "c": True}) == "b=1\nc=true\n"
