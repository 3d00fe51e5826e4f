import math

import numpy as np
import pytest

import confcal as cc
from confcal.dataset import DataFormatError, generate_synthetic
from confcal.smoothing import SmoothingConfig
from confcal.trainer import (
    CurriculumParams,
    ModelParams,
    TrainConfig,
    TrainingDivergedError,
    Velocity,
    forward,
    gradient,
    init_model,
    load_history,
    load_model,
    lr_at,
    predict_all,
    predict_proba,
    save_history,
    save_model,
    sgd_step,
    train,
)


def _histories_equal(a, b, skip_mu=False):
    if len(a) != len(b):
        return False
    for ra, rb in zip(a.records, b.records):
        fields = ["epoch", "lr", "included_fraction", "loss", "train_acc"]
        if not skip_mu:
            fields.append("mu")
        if any(getattr(ra, f) != getattr(rb, f) for f in fields):
            return False
    return True


def _params_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights)) and all(
        np.array_equal(x, y) for x, y in zip(a.biases, b.biases)
    )


class TestInitModel:
    def test_deterministic(self):
        a = init_model((4, 6, 3), seed=9)
        b = init_model((4, 6, 3), seed=9)
        assert _params_equal(a, b)

    def test_seed_changes_weights(self):
        a = init_model((4, 6, 3), seed=1)
        b = init_model((4, 6, 3), seed=2)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_shapes_and_zero_biases(self):
        m = init_model((5, 7, 2), seed=0)
        assert m.weights[0].shape == (5, 7)
        assert m.weights[1].shape == (7, 2)
        assert (m.biases[0] == 0).all() and (m.biases[1] == 0).all()

    def test_fan_in_scaling(self):
        m = init_model((400, 300), seed=3)
        # std should be near 1/sqrt(400) = 0.05
        assert 0.04 < m.weights[0].std() < 0.06

    def test_validation(self):
        with pytest.raises(ValueError):
            init_model((4,), seed=0)
        with pytest.raises(ValueError):
            init_model((4, 0, 2), seed=0)


class TestForward:
    def test_zero_model_is_uniform(self):
        m = ModelParams((3, 4), [np.zeros((3, 4))], [np.zeros(4)])
        out = forward(m, np.array([1.0, -2.0, 0.5]))
        np.testing.assert_allclose(out, np.full(4, 0.25), atol=1e-15)

    def test_bias_only_softmax(self):
        b = np.array([math.log(2.0), 0.0])
        m = ModelParams((2, 2), [np.zeros((2, 2))], [b])
        out = forward(m, np.zeros(2))
        np.testing.assert_allclose(out, [2 / 3, 1 / 3], atol=1e-12)

    def test_rows_sum_to_one(self):
        m = init_model((3, 8, 5), seed=4)
        rng = np.random.default_rng(0)
        probs = predict_proba(m, rng.standard_normal((20, 3)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert (probs > 0).all()

    def test_shape_validation(self):
        m = init_model((3, 2), seed=0)
        with pytest.raises(ValueError):
            forward(m, np.zeros(4))
        with pytest.raises(ValueError):
            predict_proba(m, np.zeros((5, 4)))


class TestLrSchedule:
    def test_step_decay(self):
        cfg = TrainConfig(epochs=1)
        assert lr_at(0, cfg) == 0.1
        assert lr_at(29, cfg) == 0.1
        assert abs(lr_at(30, cfg) - 0.01) < 1e-15
        assert abs(lr_at(65, cfg) - 0.001) < 1e-12

    def test_no_decay_when_factor_one(self):
        cfg = TrainConfig(epochs=1, lr_decay_factor=1.0)
        assert lr_at(500, cfg) == 0.1

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            lr_at(-1, TrainConfig(epochs=1))


class TestSgdStep:
    def test_two_steps_with_constant_gradient(self):
        m = ModelParams((1, 1), [np.array([[1.0]])], [np.array([0.0])])
        v = Velocity.zeros_like(m)
        g_w = [np.array([[1.0]])]
        g_b = [np.array([0.0])]
        sgd_step(m, g_w, g_b, v, lr=0.1, momentum=0.9)
        # v = 1, p = 1 - 0.1
        assert abs(m.weights[0][0, 0] - 0.9) < 1e-15
        sgd_step(m, g_w, g_b, v, lr=0.1, momentum=0.9)
        # v = 0.9 + 1 = 1.9, p = 0.9 - 0.19
        assert abs(m.weights[0][0, 0] - 0.71) < 1e-15
        assert abs(v.weights[0][0, 0] - 1.9) < 1e-15

    def test_zero_momentum_is_plain_sgd(self):
        m = ModelParams((1, 1), [np.array([[2.0]])], [np.array([1.0])])
        v = Velocity.zeros_like(m)
        sgd_step(m, [np.array([[0.5]])], [np.array([0.25])], v, lr=0.2, momentum=0.0)
        assert abs(m.weights[0][0, 0] - 1.9) < 1e-15
        assert abs(m.biases[0][0] - 0.95) < 1e-15


class TestGradient:
    def test_output_layer_delta_closed_form(self):
        # single linear layer: dL/db = mean(p - t) over included rows
        m = init_model((3, 4), seed=2)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((6, 3))
        t = np.zeros((6, 4))
        t[np.arange(6), rng.integers(0, 4, 6)] = 1.0
        probs = predict_proba(m, x)
        _, gb = gradient(m, x, t)
        np.testing.assert_allclose(gb[0], (probs - t).mean(axis=0), atol=1e-12)

    def test_excluded_rows_do_not_contribute(self):
        m = init_model((3, 5, 2), seed=5)
        rng = np.random.default_rng(6)
        x = rng.standard_normal((5, 3))
        t = np.tile([1.0, 0.0], (5, 1))
        mask = np.array([True, True, False, True, False])
        gw1, gb1 = gradient(m, x, t, mask)
        # mangle the excluded rows: gradients must not move at all
        x2 = x.copy()
        x2[2] = 123.0
        x2[4] = -55.0
        t2 = t.copy()
        t2[2] = [0.0, 1.0]
        gw2, gb2 = gradient(m, x2, t2, mask)
        for a, b in zip(gw1 + gb1, gw2 + gb2):
            np.testing.assert_array_equal(a, b)

    def test_all_excluded_raises(self):
        m = init_model((2, 2), seed=0)
        with pytest.raises(ValueError, match="no samples"):
            gradient(m, np.zeros((3, 2)), np.tile([1.0, 0.0], (3, 1)), np.zeros(3, bool))

    def test_finite_difference_spot_check(self):
        m = init_model((2, 5, 3), seed=7)
        rng = np.random.default_rng(8)
        x = rng.standard_normal((6, 2))
        t = np.zeros((6, 3))
        t[np.arange(6), rng.integers(0, 3, 6)] = 1.0
        mask = np.array([True] * 5 + [False])
        gw, gb = gradient(m, x, t, mask)

        def loss_at():
            probs = predict_proba(m, x)
            losses = -np.sum(t * np.log(np.maximum(probs, 1e-12)), axis=1)
            return float(losses[mask].sum() / mask.sum())

        eps = 1e-6
        w = m.weights[0]
        analytic = gw[0][1, 2]
        keep = w[1, 2]
        w[1, 2] = keep + eps
        hi = loss_at()
        w[1, 2] = keep - eps
        lo = loss_at()
        w[1, 2] = keep
        fd = (hi - lo) / (2 * eps)
        assert abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8) < 1e-4


def _make_setup(seed=0, n_per=12, noise=0.3):
    ds = generate_synthetic(3, n_per, 2, 10, noise, seed=seed)
    human = cc.human_confidence_table(ds)
    baseline = train(ds, TrainConfig(epochs=3, hidden=(4,), seed=99))
    model_table = cc.precompute_model_confidence(baseline.model, ds)
    return ds, human, model_table


class TestTrainBehavior:
    def test_deterministic(self):
        ds, human, _ = _make_setup()
        cfg = TrainConfig(
            epochs=4,
            hidden=(6,),
            seed=3,
            loss_kind="hcls",
            strategy="hccl",
            smoothing=SmoothingConfig(0.1, 0.2),
            curriculum=CurriculumParams(0.5, 3),
        )
        a = train(ds, cfg, human_confidence=human)
        b = train(ds, cfg, human_confidence=human)
        assert _histories_equal(a.history, b.history)
        assert _params_equal(a.model, b.model)

    def test_seed_changes_run(self):
        ds, _, _ = _make_setup()
        a = train(ds, TrainConfig(epochs=3, hidden=(4,), seed=1))
        b = train(ds, TrainConfig(epochs=3, hidden=(4,), seed=2))
        assert not _params_equal(a.model, b.model)

    def test_loss_decreases_on_easy_data(self):
        ds = generate_synthetic(3, 20, 2, 10, 0.05, seed=4)
        result = train(ds, TrainConfig(epochs=12, hidden=(8,), seed=0))
        losses = [r.loss for r in result.history.records]
        assert losses[-1] < losses[0]
        accs = [r.train_acc for r in result.history.records]
        assert accs[-1] > 0.8

    def test_history_bookkeeping(self):
        ds, human, _ = _make_setup()
        cfg = TrainConfig(
            epochs=6,
            hidden=(4,),
            seed=2,
            loss_kind="hcls",
            strategy="hccl",
            smoothing=SmoothingConfig(0.1, 0.1),
            curriculum=CurriculumParams(0.4, 3),
        )
        result = train(ds, cfg, human_confidence=human)
        records = result.history.records
        assert [r.epoch for r in records] == list(range(6))
        assert all(r.lr == 0.1 for r in records)
        fractions = [r.included_fraction for r in records]
        assert all(a <= b + 1e-15 for a, b in zip(fractions, fractions[1:]))
        # threshold hits zero at end_epoch and every sample participates
        assert records[3].mu == 0.0
        assert all(f == 1.0 for f in fractions[3:])
        assert records[0].included_fraction >= 0.4

    def test_mccl_full_inclusion_matches_iid(self):
        ds, _, model_table = _make_setup()
        base = dict(epochs=5, hidden=(4,), seed=6, loss_kind="ce")
        iid = train(ds, TrainConfig(strategy="iid", **base))
        curr = train(
            ds,
            TrainConfig(
                strategy="mccl", curriculum=CurriculumParams(1.0, 3), **base
            ),
            model_confidence=model_table,
        )
        assert _histories_equal(iid.history, curr.history, skip_mu=True)
        assert _params_equal(iid.model, curr.model)

    def test_mcls_gamma_zero_matches_ls(self):
        ds, _, model_table = _make_setup()
        base = dict(epochs=5, hidden=(4,), seed=6)
        ls = train(ds, TrainConfig(loss_kind="ls", smoothing=SmoothingConfig(0.1, 0.0), **base))
        mcls = train(
            ds,
            TrainConfig(loss_kind="mcls", smoothing=SmoothingConfig(0.1, 0.0), **base),
            model_confidence=model_table,
        )
        assert _histories_equal(ls.history, mcls.history)
        assert _params_equal(ls.model, mcls.model)

    def test_ls_alpha_zero_matches_ce(self):
        ds, _, _ = _make_setup()
        base = dict(epochs=4, hidden=(4,), seed=1)
        ce = train(ds, TrainConfig(loss_kind="ce", **base))
        ls = train(ds, TrainConfig(loss_kind="ls", smoothing=SmoothingConfig(0.0, 0.0), **base))
        assert _histories_equal(ce.history, ls.history)
        assert _params_equal(ce.model, ls.model)

    def test_resume_composes_exactly(self):
        ds, human, _ = _make_setup()
        cfg_full = TrainConfig(
            epochs=6,
            hidden=(4,),
            seed=5,
            loss_kind="hcls",
            strategy="hccl",
            smoothing=SmoothingConfig(0.1, 0.1),
            curriculum=CurriculumParams(0.5, 3),
        )
        full = train(ds, cfg_full, human_confidence=human)
        import dataclasses

        first = train(
            ds, dataclasses.replace(cfg_full, epochs=2), human_confidence=human
        )
        second = train(
            ds,
            dataclasses.replace(cfg_full, epochs=4),
            human_confidence=human,
            resume=first,
        )
        assert _params_equal(full.model, second.model)
        combined = first.history.records + second.history.records
        assert [r.loss for r in combined] == [r.loss for r in full.history.records]
        assert [r.epoch for r in combined] == list(range(6))

    def test_resume_does_not_mutate_snapshot(self):
        ds, _, _ = _make_setup()
        cfg = TrainConfig(epochs=2, hidden=(4,), seed=3)
        start = train(ds, cfg)
        w_before = [w.copy() for w in start.model.weights]
        cont_a = train(ds, cfg, resume=start)
        cont_b = train(ds, cfg, resume=start)
        for w0, w1 in zip(w_before, start.model.weights):
            np.testing.assert_array_equal(w0, w1)
        assert _params_equal(cont_a.model, cont_b.model)

    def test_missing_table_rejected(self):
        ds, human, _ = _make_setup()
        with pytest.raises(ValueError, match="model confidence"):
            train(ds, TrainConfig(epochs=1, loss_kind="mcls"))
        with pytest.raises(ValueError, match="human confidence"):
            train(
                ds,
                TrainConfig(
                    epochs=1, strategy="hccl", curriculum=CurriculumParams(0.5, 2)
                ),
            )
        with pytest.raises(ValueError, match="curriculum"):
            TrainConfig(epochs=1, strategy="mccl")

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        ds, _, _ = _make_setup()
        cfg = TrainConfig(epochs=4, hidden=(4,), seed=0, learning_rate=1e200)
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(ds, cfg)

    def test_short_final_batch_kept(self):
        ds = generate_synthetic(2, 5, 2, 4, 0.2, seed=1)
        # 10 samples, batch 4 -> batches of 4, 4, 2
        result = train(ds, TrainConfig(epochs=1, batch_size=4, seed=0))
        assert result.history[0].included_fraction == 1.0
        assert len(result.history) == 1

    def test_batch_size_larger_than_pool(self):
        ds = generate_synthetic(2, 3, 2, 4, 0.2, seed=1)
        result = train(ds, TrainConfig(epochs=2, batch_size=512, seed=0))
        assert len(result.history) == 2


class TestPredictAll:
    def test_order_and_argmax(self):
        ds, _, _ = _make_setup()
        result = train(ds, TrainConfig(epochs=2, hidden=(4,), seed=0))
        preds = predict_all(result.model, ds)
        assert [p[0] for p in preds] == ds.ids()
        for _, probs, label in preds:
            assert label == int(np.argmax(probs))
            assert abs(probs.sum() - 1.0) < 1e-12

    def test_dimension_mismatch(self):
        ds, _, _ = _make_setup()
        other = init_model((5, 3), seed=0)
        with pytest.raises(ValueError, match="features"):
            predict_all(other, ds)


class TestModelIO:
    def test_round_trip_bit_exact(self, tmp_path):
        ds, _, _ = _make_setup()
        result = train(ds, TrainConfig(epochs=2, hidden=(5, 4), seed=11))
        path = tmp_path / "m.txt"
        save_model(result.model, path)
        back = load_model(path)
        assert back.dims == result.model.dims
        assert _params_equal(back, result.model)

    def test_missing_lines_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text('{"dims": [2, 3], "hidden_activation": "relu"}\n0.1 0.2 0.3\n')
        with pytest.raises(DataFormatError, match="lines"):
            load_model(path)

    def test_wrong_value_count_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text(
            '{"dims": [2, 2], "hidden_activation": "relu"}\n1.0 2.0 3.0\n0.0 0.0\n'
        )
        with pytest.raises(DataFormatError, match="expected 4"):
            load_model(path)

    def test_non_numeric_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text(
            '{"dims": [1, 2], "hidden_activation": "relu"}\n1.0 oops\n0.0 0.0\n'
        )
        with pytest.raises(DataFormatError, match="non-numeric"):
            load_model(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text(
            '{"dims": [1, 2], "hidden_activation": "relu"}\n1.0 inf\n0.0 0.0\n'
        )
        with pytest.raises(DataFormatError, match="non-finite"):
            load_model(path)


class TestHistoryIO:
    def test_round_trip_exact(self, tmp_path):
        ds, _, _ = _make_setup()
        result = train(ds, TrainConfig(epochs=3, hidden=(4,), seed=2))
        path = tmp_path / "h.jsonl"
        save_history(result.history, path)
        back = load_history(path)
        assert back.records == result.history.records

    def test_malformed_line_reported(self, tmp_path):
        path = tmp_path / "h.jsonl"
        path.write_text('{"epoch": 0, "lr": 0.1}\n')
        with pytest.raises(DataFormatError, match="line 1"):
            load_history(path)
