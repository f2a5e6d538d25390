"""
Unit tests for evaluation, smoothing and detection statistics
"""

import math

import numpy as np
import pytest

from src.data_loader import Dataset, make_synthetic
from src.exceptions import ConfigurationError
from src.metrics import (
    RoundRecord,
    TraceSeries,
    benign_filter_rate,
    detection_stats,
    evaluate_accuracy,
    last_layer_abs_cosines,
    layerwise_similarity_experiment,
    moving_average,
    records_to_frame,
    trace_separation,
)
from src.tensor_nn import BIAS, WEIGHT, Segment, ParamVector, build_layer_specs, init_model
from src import config


def _linear_model(weights, bias):
    """Single affine layer 2 -> 2."""
    weights = np.asarray(weights, dtype=float)
    bias = np.asarray(bias, dtype=float)
    layout = (Segment(0, WEIGHT, 0, 4, (2, 2)), Segment(0, BIAS, 4, 2, (2,)))
    return ParamVector(np.concatenate([weights.ravel(), bias]), layout)


def _record(round_index, sampled, malicious, filtered, attack_active=True, **kwargs):
    values = {
        "test_accuracy": 0.5,
        "mean_abs_cos_all": 0.1,
        "mean_abs_cos_benign_truth": 0.1,
        "mean_abs_cos_malicious_truth": math.nan,
    }
    values.update(kwargs)
    return RoundRecord(
        round=round_index,
        filtered_ids=tuple(filtered),
        benign_set_size=len(sampled) - len(filtered),
        attack_active=attack_active,
        sampled_ids=tuple(sampled),
        malicious_sampled_ids=tuple(malicious),
        **values,
    )


class TestEvaluateAccuracy:
    """Test cases for test accuracy"""

    def test_constant_prediction_on_balanced_data(self):
        """A model that always predicts class 0 scores 1/C"""
        labels = np.repeat(np.arange(10), 5)
        data = Dataset(np.ones((50, 2)), labels, num_classes=10)
        spec = build_layer_specs([2, 10])
        zeros = init_model(spec, 0)
        zeros = zeros.with_values(np.zeros(len(zeros)))
        assert evaluate_accuracy(zeros, data) == pytest.approx(0.1)

    def test_hand_built_linear_model(self):
        """Predict class 1 iff x0 > x1; three of four points are right"""
        model = _linear_model([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0])
        features = np.array([[2.0, 0.0], [0.0, 2.0], [3.0, 1.0], [1.0, 3.0]])
        labels = np.array([1, 0, 1, 1])
        data = Dataset(features, labels, num_classes=2)
        assert evaluate_accuracy(model, data) == pytest.approx(0.75)

    def test_memorizing_model(self):
        """Points on the axes with an identity layer are all correct"""
        model = _linear_model([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
        data = Dataset(np.array([[1.0, 0.0], [0.0, 1.0], [5.0, 0.0]]), np.array([0, 1, 0]), num_classes=2)
        assert evaluate_accuracy(model, data) == 1.0


class TestMovingAverage:
    """Test cases for trailing moving-average smoothing"""

    def test_hand_example(self):
        assert moving_average([1, 3, 5], 2).tolist() == [1.0, 2.0, 4.0]

    def test_window_one_is_identity(self):
        series = [0.3, -1.0, 2.5]
        assert moving_average(series, 1).tolist() == pytest.approx(series)

    def test_constant_series_unchanged(self):
        smoothed = moving_average([0.25] * 100, config.SMOOTHING_WINDOW)
        assert smoothed == pytest.approx([0.25] * 100)

    def test_length_and_bounds(self):
        rng = np.random.default_rng(0)
        series = rng.uniform(-1, 1, 200)
        smoothed = moving_average(series, 40)
        assert smoothed.size == series.size
        assert smoothed.min() >= series.min() - 1e-12
        assert smoothed.max() <= series.max() + 1e-12

    def test_invalid_window(self):
        with pytest.raises(ConfigurationError):
            moving_average([1.0], 0)

    def test_trace_series(self):
        trace = TraceSeries(values=(1.0, 3.0, 5.0), window=2)
        assert trace.smoothed.tolist() == [1.0, 2.0, 4.0]


class TestDetectionStats:
    """Test cases for precision, recall and false-positive rate"""

    def test_perfect_filtering(self):
        records = [_record(0, [0, 1, 2], [0], [0]), _record(1, [0, 3, 4], [0], [0])]
        stats = detection_stats(records)
        assert stats.precision == 1.0
        assert stats.recall == 1.0
        assert stats.false_positive_rate == 0.0

    def test_nothing_filtered(self):
        stats = detection_stats([_record(0, [0, 1], [0], [])])
        assert stats.recall == 0.0
        assert stats.precision is None

    def test_three_one_one(self):
        """3 TP, 1 FP, 1 FN give precision and recall 0.75"""
        records = [
            _record(0, [0, 1, 2, 5], [0, 1], [0, 1, 5]),
            _record(1, [2, 3, 4, 6], [3, 4], [3]),
        ]
        stats = detection_stats(records)
        assert (stats.true_positives, stats.false_positives, stats.false_negatives) == (3, 1, 1)
        assert stats.precision == pytest.approx(0.75)
        assert stats.recall == pytest.approx(0.75)

    def test_inactive_rounds_ignored(self):
        records = [_record(0, [0, 1], [0], [1], attack_active=False)]
        stats = detection_stats(records)
        assert stats.precision is None and stats.recall is None and stats.false_positive_rate is None

    def test_benign_filter_rate(self):
        records = [_record(0, [0, 1, 2, 3], [0], [0, 1]), _record(1, [4, 5], [], [])]
        # round 0: 1 of 3 benign filtered, round 1: none of 2
        assert benign_filter_rate(records) == pytest.approx((1 / 3 + 0.0) / 2)


class TestTraces:
    """Test cases for per-round trace helpers"""

    def test_records_to_frame_columns(self):
        frame = records_to_frame([_record(0, [0, 1, 2], [0], [0, 2])])
        assert list(frame.columns) == config.ROUND_CSV_COLUMNS
        assert frame.loc[0, "filtered_ids"] == "0;2"
        assert frame.loc[0, "n_filtered"] == 2
        assert frame.loc[0, "attack_active"] == 1

    def test_trace_separation(self):
        records = []
        for t in range(401):
            active = t >= 200
            records.append(
                _record(
                    t,
                    [0, 1],
                    [0],
                    [],
                    attack_active=active,
                    mean_abs_cos_all=0.6 if active else 0.1,
                    mean_abs_cos_benign_truth=0.1,
                    mean_abs_cos_malicious_truth=0.9 if active else 0.1,
                )
            )
        summary = trace_separation(records)
        assert summary["post_attack_mean"] > summary["pre_attack_mean"]
        assert summary["malicious_above_benign_fraction"] == 1.0

    def test_last_layer_abs_cosines(self):
        spec = build_layer_specs([3, 4, 2])
        theta = init_model(spec, 0)
        scores = last_layer_abs_cosines(theta, {5: theta.with_values(-2 * theta.values)})
        assert scores[5] == pytest.approx(1.0)


class TestLayerwiseSimilarity:
    """Test cases for the independent-training experiment"""

    def test_identical_initialization_at_start(self):
        data = make_synthetic(3, 40, 4, seed=0)
        curves = layerwise_similarity_experiment(
            build_layer_specs([4, 6, 3]), data, n_clients=3, iters=4, seed=0, q=0.5, batch_size=8, sample_every=2
        )
        start = curves[curves["iteration"] == 0]
        assert start["reference_similarity"].tolist() == pytest.approx([1.0, 1.0])
        assert sorted(curves["iteration"].unique().tolist()) == [0, 2, 4]
        assert set(curves["layer"]) == {0, 1}

    def test_identical_clients_stay_identical(self):
        """Same data and same batch seeds give identical trajectories"""
        data = make_synthetic(3, 40, 4, seed=0)
        everything = np.arange(len(data))
        curves = layerwise_similarity_experiment(
            build_layer_specs([4, 6, 3]),
            data,
            iters=6,
            seed=1,
            batch_size=8,
            sample_every=3,
            client_indices=[everything, everything],
            client_seeds=[9, 9],
        )
        assert curves["reference_similarity"].tolist() == pytest.approx([1.0] * len(curves))
        assert curves["mean_similarity"].tolist() == pytest.approx([1.0] * len(curves))

    def test_needs_two_clients(self):
        data = make_synthetic(3, 10, 4, seed=0)
        with pytest.raises(ConfigurationError):
            layerwise_similarity_experiment(build_layer_specs([4, 3]), data, n_clients=1)
