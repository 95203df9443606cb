"""Loss, optimizer and training-loop tests."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from mpu_rnn.data import Dataset, RawTrajectory
from mpu_rnn.errors import ConfigError, InputError, InternalError, TrainingError
from mpu_rnn.network import NetworkConfig, NetworkParams, init_params
from mpu_rnn.rng import Rng
from mpu_rnn.training import (
    DEFAULT_VAL_CARVE,
    Metrics,
    RmspropState,
    TrainConfig,
    _carve_validation,
    clip_gradients,
    evaluate,
    rmsprop_step,
    softmax_cross_entropy,
    train,
)


def _cfg(**kw):
    base = dict(cell="gru", num_layers=1, hidden_size=4, input_dim=2, num_classes=2)
    base.update(kw)
    return NetworkConfig(**base)


def _toy_dataset(rng, per_class=12, num_classes=2, dim=2, name="toy"):
    """Linearly separated dot clouds; class c lives near (c - 0.5) * (1, 1)."""
    samples = []
    for c in range(num_classes):
        center = (c - 0.5) * np.ones(dim)
        for _ in range(per_class):
            T = 4 + rng.randint(5)
            dots = center + 0.15 * rng.normal(size=(T, dim))
            samples.append(RawTrajectory(dots=dots, label=c))
    return Dataset(samples, num_classes, dim, name)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        for K in (2, 3, 10):
            loss, _ = softmax_cross_entropy(np.zeros((4, K)), [0, K - 1, 0, 1])
            assert abs(loss - math.log(K)) < 1e-12

    def test_rows_of_dlogits_sum_to_zero(self):
        rng = Rng(1)
        logits = rng.uniform(-3, 3, size=(6, 4))
        _, dl = softmax_cross_entropy(logits, [0, 1, 2, 3, 0, 2])
        npt.assert_allclose(dl.sum(axis=1), np.zeros(6), atol=1e-14)

    def test_hand_value(self):
        # single row [2, 1, 0], label 0: p0 = e^2 / (e^2 + e + 1)
        p0 = math.exp(2.0) / (math.exp(2.0) + math.exp(1.0) + 1.0)
        loss, dl = softmax_cross_entropy([[2.0, 1.0, 0.0]], [0])
        assert abs(loss + math.log(p0)) < 1e-12
        assert abs(dl[0, 0] - (p0 - 1.0)) < 1e-12

    def test_gradient_matches_fd(self):
        rng = Rng(2)
        logits = rng.uniform(-2, 2, size=(3, 4))
        labels = [1, 3, 0]
        _, dl = softmax_cross_entropy(logits, labels)
        h = 1e-6
        for r in range(3):
            for c in range(4):
                lp = logits.copy()
                lp[r, c] += h
                lm = logits.copy()
                lm[r, c] -= h
                fd = (
                    softmax_cross_entropy(lp, labels)[0]
                    - softmax_cross_entropy(lm, labels)[0]
                ) / (2 * h)
                assert abs(dl[r, c] - fd) < 1e-8

    def test_mean_over_batch(self):
        a, _ = softmax_cross_entropy([[1.0, 0.0]], [0])
        b, _ = softmax_cross_entropy([[0.0, 2.0]], [1])
        both, _ = softmax_cross_entropy([[1.0, 0.0], [0.0, 2.0]], [0, 1])
        assert abs(both - (a + b) / 2) < 1e-12

    def test_extreme_logits_stay_finite(self):
        # the picked probability underflows to 0 and hits the 1e-300 floor
        loss, dl = softmax_cross_entropy([[1e4, -1e4]], [1])
        assert abs(loss + math.log(1e-300)) < 1e-9
        assert np.all(np.isfinite(dl))

    def test_input_validation(self):
        with pytest.raises(InputError):
            softmax_cross_entropy([1.0, 2.0], [0])
        with pytest.raises(InputError):
            softmax_cross_entropy([[1.0, 2.0]], [0, 1])
        with pytest.raises(InputError):
            softmax_cross_entropy([[1.0, 2.0]], [2])
        with pytest.raises(InputError):
            softmax_cross_entropy([[1.0, 2.0]], [-1])


class TestRmsprop:
    def test_single_step_hand_oracle(self):
        cfg = _cfg()
        params = NetworkParams.zeros(cfg)
        params.b_y[...] = [1.0, -2.0]
        grads = NetworkParams.zeros(cfg)
        grads.b_y[...] = [0.5, -0.25]
        state = RmspropState(cfg, learning_rate=0.1, decay=0.9, epsilon=1e-8)
        rmsprop_step(params, grads, state)
        v = 0.1 * np.array([0.25, 0.0625])
        want = np.array([1.0, -2.0]) - 0.1 * np.array([0.5, -0.25]) / (np.sqrt(v) + 1e-8)
        npt.assert_allclose(params.b_y, want, rtol=1e-15)

    def test_accumulator_decays(self):
        cfg = _cfg()
        params = NetworkParams.zeros(cfg)
        grads = NetworkParams.zeros(cfg)
        grads.b_y[...] = [1.0, 0.0]
        state = RmspropState(cfg, learning_rate=0.0, decay=0.5)
        rmsprop_step(params, grads, state)
        rmsprop_step(params, grads, state)
        # v after two identical steps: 0.5*(0.5*0.5) + 0.5*1 = 0.75
        npt.assert_allclose(state.v.b_y, [0.75, 0.0], rtol=1e-15)

    def test_zero_learning_rate_freezes_params(self):
        cfg = _cfg()
        params = init_params(cfg, Rng(3))
        before = [a.copy() for _, a in params.named_arrays()]
        grads = NetworkParams.zeros(cfg)
        for _, g in grads.named_arrays():
            g[...] = 0.3
        state = RmspropState(cfg, learning_rate=0.0)
        rmsprop_step(params, grads, state)
        for b, (_, a) in zip(before, params.named_arrays()):
            npt.assert_array_equal(a, b)
        assert np.any(state.v.b_y > 0)  # accumulators still move

    def test_hyperparameter_validation(self):
        cfg = _cfg()
        with pytest.raises(ConfigError):
            RmspropState(cfg, learning_rate=-1e-3)
        with pytest.raises(ConfigError):
            RmspropState(cfg, decay=1.0)
        RmspropState(cfg, learning_rate=0.0)  # explicitly allowed

    def test_shape_mismatch_is_internal(self):
        cfg = _cfg()
        params = NetworkParams.zeros(cfg)
        grads = NetworkParams.zeros(cfg)
        grads.b_y = np.zeros(5)
        with pytest.raises(InternalError):
            rmsprop_step(params, grads, RmspropState(cfg))


class TestClip:
    def test_norm_reported_and_untouched_below_cap(self):
        cfg = _cfg()
        grads = NetworkParams.zeros(cfg)
        grads.b_y[...] = [3.0, 4.0]
        norm = clip_gradients(grads, 100.0)
        assert abs(norm - 5.0) < 1e-12
        npt.assert_array_equal(grads.b_y, [3.0, 4.0])

    def test_scales_to_cap(self):
        cfg = _cfg()
        grads = NetworkParams.zeros(cfg)
        grads.b_y[...] = [3.0, 4.0]
        clip_gradients(grads, 1.0)
        npt.assert_allclose(grads.b_y, [0.6, 0.8], rtol=1e-12)
        assert abs(clip_gradients(grads, None) - 1.0) < 1e-12

    def test_zero_cap_disables(self):
        cfg = _cfg()
        grads = NetworkParams.zeros(cfg)
        grads.b_y[...] = [30.0, 40.0]
        clip_gradients(grads, 0)
        npt.assert_array_equal(grads.b_y, [30.0, 40.0])


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"dropout_keep": 0.0},
            {"dropout_keep": 1.2},
            {"patience": -1},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw).validate()


class TestMetricsCsv:
    def test_roundtrip_format(self, tmp_path):
        m = Metrics()
        m.add(1, 0.693147, 0.5, 0.25, 1.2345, 600)
        m.add(2, 0.5, 0.75, 0.5, 0.9, 1200)
        path = tmp_path / "metrics.csv"
        m.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,train_acc,val_acc,seconds,cell_evals"
        assert lines[1] == "1,0.693147,0.500000,0.250000,1.234,600"
        assert lines[2] == "2,0.500000,0.750000,0.500000,0.900,1200"


class TestEvaluate:
    def test_bias_only_classifier(self):
        cfg = _cfg()
        params = NetworkParams.zeros(cfg)
        params.b_y[...] = [10.0, 0.0]  # always predicts class 0
        ds = _toy_dataset(Rng(4), per_class=5)
        assert evaluate(params, cfg, ds) == 0.5

    def test_empty_dataset(self):
        with pytest.raises(InputError):
            evaluate(NetworkParams.zeros(_cfg()), _cfg(), Dataset([], 2, 2, "x"))


class TestCarve:
    def test_stratified_share(self):
        ds = _toy_dataset(Rng(5), per_class=46)
        tr, va = _carve_validation(ds, Rng(6))
        per_class_val = max(1, int(46 * DEFAULT_VAL_CARVE))
        assert len(va) == 2 * per_class_val
        assert len(tr) + len(va) == len(ds)
        for split in (tr, va):
            labels = [s.label for s in split.samples]
            assert labels.count(0) == labels.count(1)

    def test_disjoint_union(self):
        ds = _toy_dataset(Rng(7), per_class=10)
        tr, va = _carve_validation(ds, Rng(8))
        ids = {id(s) for s in ds.samples}
        got = [id(s) for s in tr.samples] + [id(s) for s in va.samples]
        assert sorted(got) == sorted(ids)

    def test_tiny_class_rejected(self):
        ds = Dataset(
            [RawTrajectory(dots=np.zeros((4, 2)), label=0)], 1, 2, "tiny"
        )
        with pytest.raises(InputError):
            _carve_validation(ds, Rng(9))


class TestTrainLoop:
    def test_loss_decreases_on_separable_data(self):
        cfg = _cfg()
        params = init_params(cfg, Rng(10))
        ds = _toy_dataset(Rng(11), per_class=12)
        tcfg = TrainConfig(epochs=8, batch_size=8, seed=1, learning_rate=0.01)
        best, metrics = train(params, cfg, ds, tcfg, val_ds=_toy_dataset(Rng(12), 6))
        assert metrics.train_loss[-1] < metrics.train_loss[0]
        assert metrics.val_acc[-1] >= 0.9
        assert len(metrics.epochs) == 8
        assert metrics.cell_evals == sorted(metrics.cell_evals)

    def test_zero_learning_rate_is_a_no_op(self):
        cfg = _cfg()
        params = init_params(cfg, Rng(13))
        before = [a.copy() for _, a in params.named_arrays()]
        ds = _toy_dataset(Rng(14), per_class=8)
        best, _ = train(
            params, cfg, ds, TrainConfig(epochs=2, batch_size=4, learning_rate=0.0)
        )
        for b, (_, a) in zip(before, params.named_arrays()):
            npt.assert_array_equal(a, b)
        for b, (_, a) in zip(before, best.named_arrays()):
            npt.assert_array_equal(a, b)

    def test_deterministic_given_seed(self):
        ds = _toy_dataset(Rng(15), per_class=8)
        va = _toy_dataset(Rng(16), per_class=4)
        losses = []
        for _ in range(2):
            cfg = _cfg()
            params = init_params(cfg, Rng(17))
            _, metrics = train(
                params, cfg, ds,
                TrainConfig(epochs=3, batch_size=4, seed=99, learning_rate=5e-3),
                val_ds=va,
            )
            losses.append(tuple(metrics.train_loss))
        assert losses[0] == losses[1]

    def test_patience_stops_early(self):
        cfg = _cfg()
        params = init_params(cfg, Rng(18))
        ds = _toy_dataset(Rng(19), per_class=8)
        # frozen parameters: val accuracy never improves after epoch 1
        _, metrics = train(
            params, cfg, ds,
            TrainConfig(epochs=10, batch_size=4, learning_rate=0.0, patience=2),
        )
        assert len(metrics.epochs) == 3

    def test_nan_input_aborts_with_epoch(self):
        cfg = _cfg()
        params = init_params(cfg, Rng(20))
        bad = RawTrajectory(dots=np.full((4, 2), np.nan), label=0)
        good = [
            RawTrajectory(dots=np.zeros((4, 2)), label=c % 2) for c in range(8)
        ]
        ds = Dataset(good + [bad], 2, 2, "poison")
        with pytest.raises(TrainingError) as err:
            train(
                params, cfg, ds,
                TrainConfig(epochs=1, batch_size=4, learning_rate=1e-3),
                val_ds=_toy_dataset(Rng(21), 2),
            )
        assert err.value.epoch == 1

    def test_mismatched_dataset_rejected(self):
        cfg = _cfg()
        params = init_params(cfg, Rng(22))
        tcfg = TrainConfig(epochs=1)
        with pytest.raises(InputError):
            train(params, cfg, Dataset([], 2, 2, "e"), tcfg)
        ds3 = _toy_dataset(Rng(23), per_class=4, dim=3)
        with pytest.raises(ConfigError):
            train(params, cfg, ds3, tcfg)
        ds5 = _toy_dataset(Rng(24), per_class=4, num_classes=5)
        with pytest.raises(ConfigError):
            train(params, cfg, ds5, tcfg)

    def test_dropout_override_runs(self):
        cfg = _cfg(num_layers=2)
        params = init_params(cfg, Rng(25))
        ds = _toy_dataset(Rng(26), per_class=6)
        _, metrics = train(
            params, cfg, ds,
            TrainConfig(epochs=2, batch_size=4, dropout_keep=0.5, seed=7),
        )
        assert len(metrics.epochs) == 2
        assert all(np.isfinite(v) for v in metrics.train_loss)
