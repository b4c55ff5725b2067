"""Schedule, optimizer, training loop determinism, telemetry I/O."""

import math

import numpy as np
import pytest

from orpokit import trainer
from orpokit.data import DatasetSplit
from orpokit.lm import TinyLM, load_checkpoint
from orpokit.objectives import HyperParams
from orpokit.trainer import (OptimizerState, TrainAbort, TrainConfig,
                             lr_at, optimizer_step, read_telemetry, train,
                             write_telemetry)


def quick_cfg(**kw):
    base = dict(loss_kind="orpo", hp=HyperParams(lam=1.0), lr_max=1e-3,
                epochs=2, batch_size=32, seed=5, eval_every=0)
    base.update(kw)
    return TrainConfig(**base)


def epoch_means(rows, epochs, fieldname):
    per = len(rows) // epochs
    return [float(np.mean([getattr(r, fieldname)
                           for r in rows[i * per:(i + 1) * per]]))
            for i in range(epochs)]


class TestLrSchedule:
    CFG = TrainConfig(warmup_frac=0.1, lr_max=2e-3)

    def test_endpoints(self):
        assert lr_at(0, 100, self.CFG) == 0.0
        assert lr_at(10, 100, self.CFG) == self.CFG.lr_max
        assert abs(lr_at(100, 100, self.CFG)) < 1e-12

    def test_warmup_is_linear(self):
        assert lr_at(5, 100, self.CFG) == pytest.approx(self.CFG.lr_max / 2)

    def test_cosine_midpoint(self):
        assert lr_at(55, 100, self.CFG) == pytest.approx(self.CFG.lr_max / 2)

    def test_no_steps_edge(self):
        assert lr_at(0, 0, self.CFG) == 0.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            lr_at(101, 100, self.CFG)


class TestOptimizer:
    def test_zero_gradient_is_a_no_op(self):
        params = {"w": np.array([1.0, -2.0])}
        opt = OptimizerState.for_params(params)
        optimizer_step(params, {"w": np.zeros(2)}, opt, lr=0.1)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])

    def test_single_step_descends_a_quadratic(self):
        w = np.array([1.0])
        params = {"w": w}
        opt = OptimizerState.for_params(params)
        optimizer_step(params, {"w": 2.0 * w.copy()}, opt, lr=0.05)
        assert params["w"][0] ** 2 < 1.0

    def test_grads_are_zeroed_after_the_step(self):
        params = {"w": np.array([1.0])}
        g = {"w": np.array([3.0])}
        optimizer_step(params, g, OptimizerState.for_params(params), lr=0.01)
        assert g["w"][0] == 0.0

    def test_non_finite_gradient_rejected(self):
        params = {"w": np.array([1.0])}
        with pytest.raises(ValueError, match="non-finite gradient"):
            optimizer_step(params, {"w": np.array([math.nan])},
                           OptimizerState.for_params(params), lr=0.01)

    def test_identical_runs_are_bit_identical(self, small_split, small_cfg):
        outs = []
        for _ in range(2):
            res = train(TinyLM(small_cfg), small_split, quick_cfg(epochs=1))
            outs.append(b"".join(arr.tobytes()
                                 for arr in res.model.params().values()))
        assert outs[0] == outs[1]


class TestTrainLoop:
    def test_zero_epochs_returns_input_bits(self, small_split, small_cfg):
        init = TinyLM(small_cfg)
        res = train(init, small_split, quick_cfg(epochs=0))
        assert res.telemetry == []
        for name, arr in init.params().items():
            assert arr.tobytes() == res.model.params()[name].tobytes()

    def test_input_model_is_not_mutated(self, small_split, small_cfg):
        init = TinyLM(small_cfg)
        before = {k: v.copy() for k, v in init.params().items()}
        train(init, small_split, quick_cfg(epochs=1))
        for name, arr in init.params().items():
            np.testing.assert_array_equal(arr, before[name])

    def test_sft_equals_orpo_at_lambda_zero(self, small_split, small_cfg,
                                            tmp_path):
        res_sft = train(TinyLM(small_cfg), small_split,
                        quick_cfg(loss_kind="sft"))
        res_orpo = train(TinyLM(small_cfg), small_split,
                         quick_cfg(loss_kind="orpo", hp=HyperParams(lam=0.0)))
        p_sft = tmp_path / "sft.csv"
        p_orpo = tmp_path / "orpo.csv"
        write_telemetry(p_sft, res_sft.telemetry)
        write_telemetry(p_orpo, res_orpo.telemetry)
        assert p_sft.read_bytes() == p_orpo.read_bytes()
        for name, arr in res_sft.model.params().items():
            assert arr.tobytes() == res_orpo.model.params()[name].tobytes()

    def test_telemetry_rows_are_self_consistent(self, small_split, small_cfg):
        lam = 0.7
        res = train(TinyLM(small_cfg), small_split,
                    quick_cfg(hp=HyperParams(lam=lam), epochs=1))
        from orpokit.objectives import DEFAULT_LOGP_CLAMP, log_odds
        for row in res.telemetry:
            assert row.l_total == pytest.approx(row.l_sft + lam * row.l_or,
                                                abs=1e-9)
            want_z = (log_odds(min(row.avg_logp_chosen, DEFAULT_LOGP_CLAMP))
                      - log_odds(min(row.avg_logp_rejected,
                                     DEFAULT_LOGP_CLAMP)))
            assert row.log_odds_ratio == pytest.approx(want_z, abs=1e-9)

    def test_step_and_epoch_columns(self, small_split, small_cfg):
        res = train(TinyLM(small_cfg), small_split, quick_cfg(epochs=2))
        n_batches = math.ceil(len(small_split.train) / 32)
        assert [r.step for r in res.telemetry] \
            == list(range(2 * n_batches))
        assert [r.epoch for r in res.telemetry] \
            == [0] * n_batches + [1] * n_batches

    def test_checkpoints_bracket_the_run(self, small_split, small_cfg,
                                         tmp_path):
        init = TinyLM(small_cfg)
        res = train(init, small_split, quick_cfg(epochs=1),
                    out_dir=tmp_path)
        first = load_checkpoint(res.checkpoints[0])
        for name, arr in init.params().items():
            assert arr.tobytes() == getattr(first, name).tobytes()
        last = load_checkpoint(res.checkpoints[-1])
        for name, arr in res.model.params().items():
            assert arr.tobytes() == getattr(last, name).tobytes()

    def test_dpo_trains_and_counts_four_forwards(self, small_split,
                                                 small_cfg):
        cfg = quick_cfg(loss_kind="dpo", epochs=1)
        res = train(TinyLM(small_cfg), small_split, cfg)
        expected = 4 * len(small_split.train) + 4 * len(small_split.eval)
        assert res.forward_passes == expected
        assert all(math.isfinite(r.l_total) for r in res.telemetry)

    def test_orpo_counts_two_forwards(self, small_split, small_cfg):
        res = train(TinyLM(small_cfg), small_split, quick_cfg(epochs=1))
        expected = 2 * len(small_split.train) + 2 * len(small_split.eval)
        assert res.forward_passes == expected

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_non_finite_loss_aborts_with_context(self, small_split,
                                                 small_cfg):
        model = TinyLM(small_cfg)
        model.output_bias[0] = math.inf
        with pytest.raises(TrainAbort, match="non-finite loss at step 0"):
            train(model, small_split, quick_cfg())

    def test_eval_history_tracks_best(self, small_split, small_cfg):
        res = train(TinyLM(small_cfg), small_split,
                    quick_cfg(epochs=2, eval_every=5))
        assert res.eval_history
        losses = [loss for _, loss in res.eval_history]
        assert res.best_eval_loss == min(losses)
        assert res.best_model is not None

    def test_orpo_direction_over_ten_epochs(self, small_split, small_cfg):
        res = train(TinyLM(small_cfg), small_split, quick_cfg(epochs=10))
        lor = epoch_means(res.telemetry, 10, "log_odds_ratio")
        assert lor[-1] > lor[0]

    def test_sft_lifts_rejected_likelihood(self, small_split, small_cfg):
        res = train(TinyLM(small_cfg), small_split,
                    quick_cfg(loss_kind="sft", epochs=10))
        assert res.telemetry[-1].avg_logp_rejected \
            > res.telemetry[0].avg_logp_rejected

    def test_empty_train_split_rejected(self, small_split):
        empty = DatasetSplit(train=[], eval=small_split.eval,
                             test=small_split.test, seed=0)
        with pytest.raises(ValueError, match="train split is empty"):
            train(TinyLM(replace_cfg()), empty, quick_cfg())


def replace_cfg():
    from orpokit.lm import LMConfig
    return LMConfig(vocab_size=8, embed_dim=2, hidden_dim=3,
                    context_window=2, seed=0)


class TestEvaluate:
    def test_margin_field(self, small_split, small_cfg):
        ev = trainer.evaluate(TinyLM(small_cfg), small_split.eval,
                              quick_cfg())
        assert ev["margin"] == pytest.approx(
            ev["avg_logp_chosen"] - ev["avg_logp_rejected"], abs=1e-12)

    def test_dpo_requires_reference(self, small_split, small_cfg):
        with pytest.raises(ValueError, match="reference"):
            trainer.evaluate(TinyLM(small_cfg), small_split.eval,
                             quick_cfg(loss_kind="dpo"))

    def test_untrained_model_scores_uniform(self, small_split, small_cfg):
        ev = trainer.evaluate(TinyLM(small_cfg), small_split.eval,
                              quick_cfg())
        assert ev["avg_logp_chosen"] == pytest.approx(
            -math.log(small_cfg.vocab_size), abs=1e-9)


class TestLambdaSweep:
    def test_margins_respond_to_lambda(self, small_split, small_cfg):
        sweep = trainer.lambda_sweep(TinyLM(small_cfg), small_split,
                                     [0.1, 1.0], quick_cfg(epochs=4))
        assert sweep.lambdas == [0.1, 1.0]
        assert sweep.margins[1] > sweep.margins[0]

    def test_identical_init_shares_step_zero(self, small_split, small_cfg):
        sweep = trainer.lambda_sweep(TinyLM(small_cfg), small_split,
                                     [0.1, 1.0], quick_cfg(epochs=1))
        first_rows = [sweep.telemetries[lam][0] for lam in (0.1, 1.0)]
        assert first_rows[0].l_sft == first_rows[1].l_sft
        assert first_rows[0].avg_logp_chosen == first_rows[1].avg_logp_chosen

    def test_empty_lambda_list_rejected(self, small_split, small_cfg):
        with pytest.raises(ValueError):
            trainer.lambda_sweep(TinyLM(small_cfg), small_split, [],
                                 quick_cfg())


class TestTelemetryIO:
    def test_header_constant(self):
        assert trainer.TELEMETRY_HEADER == (
            "step,epoch,l_sft,l_or,l_total,avg_logp_chosen,"
            "avg_logp_rejected,log_odds_ratio,lr")

    def test_round_trip(self, small_split, small_cfg, tmp_path):
        res = train(TinyLM(small_cfg), small_split, quick_cfg(epochs=1))
        path = tmp_path / "t.csv"
        write_telemetry(path, res.telemetry)
        back = read_telemetry(path)
        assert len(back) == len(res.telemetry)
        for a, b in zip(back, res.telemetry):
            assert a.step == b.step and a.epoch == b.epoch
            assert a.l_total == pytest.approx(b.l_total, rel=1e-8)
            assert a.avg_logp_chosen == pytest.approx(b.avg_logp_chosen,
                                                      rel=1e-8)

    def test_write_is_a_fixed_point(self, small_split, small_cfg, tmp_path):
        res = train(TinyLM(small_cfg), small_split, quick_cfg(epochs=1))
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        write_telemetry(p1, res.telemetry)
        write_telemetry(p2, read_telemetry(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("step,epoch,l_or,l_sft,l_total,avg_logp_chosen,"
                        "avg_logp_rejected,log_odds_ratio,lr\n",
                        encoding="utf-8")
        with pytest.raises(ValueError, match="header mismatch"):
            read_telemetry(path)

    def test_row_width_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(trainer.TELEMETRY_HEADER + "\n1,2,3\n",
                        encoding="utf-8")
        with pytest.raises(ValueError, match="width"):
            read_telemetry(path)


class TestTrainConfigValidation:
    def test_rejections(self):
        with pytest.raises(ValueError):
            TrainConfig(loss_kind="ppo")
        with pytest.raises(ValueError):
            TrainConfig(lr_max=0.0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=-1)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(warmup_frac=1.5)
        with pytest.raises(ValueError):
            TrainConfig(eval_every=-1)
