"""Metric correctness against an independent scalar reference, report emitters."""

import numpy as np
import pytest

from amcnet.evaluation import (
    EvalReport,
    emit_f1_comparison,
    emit_report,
    evaluate,
    metrics_from_predictions,
    read_report_jsonl,
)
from amcnet.errors import DataError
from amcnet.model import init_params, param_count
from amcnet.signals import SynthConfig, gen_dataset

from test_model import tiny_config


def reference_metrics(y_true, y_pred, k):
    """Plain-loop precision/recall/F1, written independently of the library path."""
    f1 = []
    correct = sum(1 for t, p in zip(y_true, y_pred) if t == p)
    for c in range(k):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        if tp == 0:
            f1.append(0.0)
        else:
            precision = tp / (tp + fp)
            recall = tp / (tp + fn)
            f1.append(2 * precision * recall / (precision + recall))
    return correct / len(y_true), f1


def sample_report():
    confusion = np.array([[5, 1], [2, 4]], dtype=np.int64)
    return EvalReport(
        accuracy=0.75,
        per_class_f1={"BPSK": 0.769230769, "QPSK": 0.727272727},
        macro_f1_mean=0.748251748,
        macro_f1_std=0.020979021,
        confusion=confusion,
        class_names=["BPSK", "QPSK"],
        param_count=1234,
        mean_latency_us=42.5,
        latency_std_us=3.25,
    )


class TestMetrics:
    def test_perfect_predictor(self):
        y = np.array([0, 1, 2, 0, 1, 2])
        stats = metrics_from_predictions(y, y, ["a", "b", "c"])
        assert stats["accuracy"] == 1.0
        assert all(v == 1.0 for v in stats["per_class_f1"].values())
        assert np.array_equal(stats["confusion"], np.diag([2, 2, 2]))

    def test_constant_predictor_two_class(self):
        y_true = np.array([0, 0, 1, 1])
        y_pred = np.zeros(4, dtype=int)
        stats = metrics_from_predictions(y_true, y_pred, ["a", "b"])
        assert stats["accuracy"] == 0.5
        assert stats["per_class_f1"]["a"] == pytest.approx(2 / 3)
        assert stats["per_class_f1"]["b"] == 0.0

    def test_matches_scalar_reference(self, rng):
        for trial in range(10):
            t_rng = np.random.default_rng(trial)
            y_true = t_rng.integers(0, 3, 60)
            y_pred = t_rng.integers(0, 3, 60)
            stats = metrics_from_predictions(y_true, y_pred, ["a", "b", "c"])
            ref_acc, ref_f1 = reference_metrics(y_true.tolist(), y_pred.tolist(), 3)
            assert stats["accuracy"] == pytest.approx(ref_acc, abs=1e-15)
            for got, want in zip(stats["per_class_f1"].values(), ref_f1):
                assert got == pytest.approx(want, abs=1e-15)

    def test_confusion_consistency(self, rng):
        y_true = rng.integers(0, 4, 100)
        y_pred = rng.integers(0, 4, 100)
        stats = metrics_from_predictions(y_true, y_pred, list("abcd"))
        confusion = stats["confusion"]
        assert confusion.sum() == 100
        for c in range(4):
            assert confusion[c].sum() == int((y_true == c).sum())
        assert stats["accuracy"] == np.trace(confusion) / confusion.sum()

    def test_f1_in_unit_interval(self, rng):
        y_true = rng.integers(0, 5, 200)
        y_pred = rng.integers(0, 5, 200)
        stats = metrics_from_predictions(y_true, y_pred, list("abcde"))
        assert all(0.0 <= v <= 1.0 for v in stats["per_class_f1"].values())


class TestEvaluate:
    def test_report_fields(self):
        frames = gen_dataset(1, SynthConfig(), seed=0)
        cfg = tiny_config()
        from dataclasses import replace

        cfg = replace(cfg, input_len=128, n_classes=11)
        params = init_params(cfg, seed=0)
        report = evaluate(params, frames)
        assert report.confusion.shape == (11, 11)
        assert report.confusion.sum() == len(frames)
        assert report.param_count == param_count(cfg)
        assert abs(report.macro_f1_mean - np.mean(list(report.per_class_f1.values()))) < 1e-12

    def test_empty_set_rejected(self):
        params = init_params(tiny_config(), seed=0)
        with pytest.raises(DataError):
            evaluate(params, [])


class TestEmitters:
    def test_text_golden(self, tmp_path):
        path = tmp_path / "report.txt"
        emit_report(sample_report(), path, "text")
        golden = (
            "accuracy: 0.750000\n"
            "macro f1: 0.748252 +/- 0.020979\n"
            "parameters: 1234\n"
            "inference latency: 42.50 us +/- 3.25 us\n"
            "\n"
            "per-class f1:\n"
            "  BPSK     0.769231\n"
            "  QPSK     0.727273\n"
            "\n"
            "confusion (rows true, cols predicted):\n"
            "             BPSK    QPSK\n"
            "BPSK            5       1\n"
            "QPSK            2       4\n"
        )
        assert path.read_text() == golden

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_report(sample_report(), a, "csv")
        emit_report(sample_report(), b, "csv")
        assert a.read_bytes() == b.read_bytes()

    def test_jsonl_round_trip(self, tmp_path):
        path = tmp_path / "report.jsonl"
        original = sample_report()
        emit_report(original, path, "json-lines")
        back = read_report_jsonl(path)
        assert back.accuracy == original.accuracy
        assert back.per_class_f1 == original.per_class_f1
        assert np.array_equal(back.confusion, original.confusion)
        assert back.mean_latency_us == original.mean_latency_us

    def test_text_macro_equals_mean_of_rows(self, tmp_path):
        y_true = np.random.default_rng(0).integers(0, 3, 90)
        y_pred = np.random.default_rng(1).integers(0, 3, 90)
        stats = metrics_from_predictions(y_true, y_pred, ["x", "y", "z"])
        assert abs(stats["macro_f1_mean"] - np.mean(list(stats["per_class_f1"].values()))) < 1e-9

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(sample_report(), tmp_path / "r.xml", "xml")

    def test_comparison_table(self, tmp_path):
        path = tmp_path / "table2.csv"
        emit_f1_comparison({"baseline": sample_report(), "causal": sample_report()}, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "modulation,baseline,causal"
        assert lines[1].startswith("BPSK,0.769,0.769")
