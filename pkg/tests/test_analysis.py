"""Parameter accounting, step law, benchmark and gradient-check tests.

The fault-injection tests corrupt the analytic gradient on purpose and
demand that grad_check not only fails but blames the right tensor.
"""

import numpy as np
import pytest

from mpu_rnn import analysis
from mpu_rnn.analysis import (
    GOLDEN_PARAM_TABLE,
    bench_architectures,
    bench_speed,
    count_params,
    count_steps,
    format_param_report,
    format_speed_reports,
    grad_check,
    param_report_csv,
    speed_report_csv,
)
from mpu_rnn.errors import ConfigError, VerificationError
from mpu_rnn.network import NetworkConfig, NetworkParams, backward, forward
from mpu_rnn.rng import Rng


def _cfg(**kw):
    base = dict(
        cell="mpu",
        num_layers=2,
        hidden_size=4,
        input_dim=2,
        num_classes=3,
        arch="general",
        readout="stacked_sum",
    )
    base.update(kw)
    return NetworkConfig(**base)


class TestGoldenTable:
    @pytest.mark.parametrize("row", GOLDEN_PARAM_TABLE)
    def test_exact_and_printed(self, row):
        arch, layers, hidden, classes, printed, exact = row
        cfg = _cfg(arch=arch, num_layers=layers, hidden_size=hidden, num_classes=classes)
        report = count_params(cfg, "paper_table")
        assert report.total == exact
        assert abs(report.total / 1e6 - printed) <= 0.01

    def test_lstm_uses_four_banks(self):
        mpu = count_params(_cfg(num_layers=3, hidden_size=8))
        lstm = count_params(_cfg(cell="lstm", num_layers=3, hidden_size=8))
        gru = count_params(_cfg(cell="gru", num_layers=3, hidden_size=8))
        assert mpu.recurrent_count == gru.recurrent_count
        assert lstm.recurrent_count * 3 == mpu.recurrent_count * 4

    def test_two_bank_doubles_recurrent_only(self):
        one = count_params(_cfg(num_layers=3, hidden_size=8))
        two = count_params(_cfg(arch="hybrid", num_layers=3, hidden_size=8))
        assert two.recurrent_count == 2 * one.recurrent_count
        assert two.readout_count == one.readout_count


class TestFullActual:
    def test_matches_allocated_arrays_by_category(self):
        for kw in (
            {},
            {"cell": "mpu_c", "readout": "per_layer"},
            {"arch": "hybrid", "readout_matrix_mode": "split", "cell": "gru"},
            {"arch": "bidirectional", "cell": "lstm", "skip_input_to_all_layers": False},
        ):
            cfg = _cfg(**kw)
            report = count_params(cfg, "full_actual")
            rec = inp = ro = bias = 0
            for name, arr in NetworkParams.zeros(cfg).named_arrays():
                leaf = name.rsplit(".", 1)[-1]
                if leaf.startswith("W_h"):
                    rec += arr.size
                elif leaf.startswith("W_x"):
                    inp += arr.size
                elif leaf.startswith("b_"):
                    bias += arr.size
                else:
                    ro += arr.size
            assert (rec, inp, ro, bias) == (
                report.recurrent_count,
                report.input_weight_count,
                report.readout_count,
                report.bias_count,
            )

    def test_never_below_paper_table(self):
        for kw in ({}, {"arch": "hybrid"}, {"cell": "lstm"}, {"readout": "per_layer"}):
            cfg = _cfg(hidden_size=16, **kw)
            assert (
                count_params(cfg, "full_actual").total
                >= count_params(cfg, "paper_table").total
            )

    def test_unknown_convention(self):
        with pytest.raises(ConfigError):
            count_params(_cfg(), "both")


class TestStepLaw:
    def test_closed_forms_over_random_sizes(self):
        rng = Rng(7)
        for _ in range(20):
            N = 1 + rng.randint(5)
            T = 2 + rng.randint(199)
            assert count_steps(_cfg(num_layers=N), T).cell_evals == N * T
            assert (
                count_steps(_cfg(num_layers=N, arch="hybrid"), T).cell_evals
                == N * (T + T // 2)
            )
            assert (
                count_steps(_cfg(num_layers=N, arch="bidirectional"), T).cell_evals
                == 2 * N * T
            )

    def test_even_length_ratio_is_three_quarters(self):
        for T in (2, 10, 100, 150):
            hy = count_steps(_cfg(arch="hybrid"), T).per_layer_evals
            bi = count_steps(_cfg(arch="bidirectional"), T).per_layer_evals
            assert hy * 4 == bi * 3

    def test_forward_trace_agrees(self):
        # the counting function and the real recurrence must never drift
        rng = Rng(8)
        for arch in ("general", "hybrid", "bidirectional"):
            cfg = _cfg(arch=arch, hidden_size=3)
            params = NetworkParams.zeros(cfg)
            for T in (2, 5, 8):
                xs = rng.uniform(-1, 1, size=(T, 2))
                _, trace = forward(xs, params, cfg)
                assert trace.cell_evals == count_steps(cfg, T).cell_evals

    def test_too_short(self):
        with pytest.raises(ConfigError):
            count_steps(_cfg(), 1)


class TestBench:
    def test_reports_positive_time(self):
        rep = bench_speed(_cfg(hidden_size=3), sample=6, repetitions=3, seed=1)
        assert rep.seconds_per_sample > 0
        assert rep.cell_evals == 2 * 6

    def test_array_sample(self):
        xs = Rng(2).uniform(-1, 1, size=(5, 2))
        rep = bench_speed(_cfg(hidden_size=3), sample=xs, repetitions=2)
        assert rep.T == 5

    def test_all_architectures(self):
        reports, ratio = bench_architectures(_cfg(hidden_size=3), T=6, repetitions=2)
        assert set(reports) == {"general", "hybrid", "bidirectional"}
        assert ratio > 0

    def test_repetitions_validated(self):
        with pytest.raises(ConfigError):
            bench_speed(_cfg(), sample=6, repetitions=0)


class TestGradCheck:
    def test_clean_pass(self):
        cfg = _cfg(hidden_size=3)
        result = grad_check(cfg, seed=5)
        assert result.max_rel_err < result.tolerance
        total = sum(a.size for _, a in NetworkParams.zeros(cfg).named_arrays())
        assert result.checked_params == total
        assert result.worst_name != ""

    def test_dropout_rejected(self):
        with pytest.raises(ConfigError):
            grad_check(_cfg(dropout_keep=0.5), seed=1)

    def test_sign_flip_is_caught_and_blamed(self, monkeypatch):
        victim = "layer2.bank1.W_hi"

        def corrupted(trace, dlogits, params, cfg):
            grads = backward(trace, dlogits, params, cfg)
            dict(grads.named_arrays())[victim] *= -1.0
            return grads

        monkeypatch.setattr(analysis, "backward", corrupted)
        with pytest.raises(VerificationError, match="layer2.bank1.W_hi"):
            grad_check(_cfg(hidden_size=3), seed=6)

    def test_single_entry_bias_is_blamed_precisely(self, monkeypatch):
        victim = "readout.U1"

        def corrupted(trace, dlogits, params, cfg):
            grads = backward(trace, dlogits, params, cfg)
            dict(grads.named_arrays())[victim].reshape(-1)[2] += 0.5
            return grads

        monkeypatch.setattr(analysis, "backward", corrupted)
        with pytest.raises(VerificationError) as err:
            grad_check(_cfg(hidden_size=3), seed=7)
        assert "readout.U1[2]" in str(err.value)


class TestReportFormats:
    def test_param_report_text(self):
        cfg = _cfg(arch="general", num_layers=5, hidden_size=256, num_classes=3873)
        text = format_param_report(cfg, count_params(cfg))
        assert "2,760,960" in text
        assert "(2.76 mil)" in text

    def test_param_report_csv_roundtrip(self):
        cfg = _cfg()
        report = count_params(cfg, "full_actual")
        text = param_report_csv(cfg, report)
        header, row = text.strip().split("\n")
        fields = dict(zip(header.split(","), row.split(",")))
        assert int(fields["total"]) == report.total
        assert fields["convention"] == "full_actual"

    def test_speed_report_text(self):
        reports = [count_steps(_cfg(num_layers=3), 100)]
        text = format_speed_reports(reports)
        assert "300" in text
        assert text.rstrip().endswith("-")  # no timing column value

    def test_speed_report_csv(self):
        rep = count_steps(_cfg(), 10)
        text = speed_report_csv([rep])
        assert text.endswith("\n")
        assert text.splitlines()[1].endswith(",")  # empty seconds field
