import csv

import numpy as np
import pytest

from manifold_unlearn.datagen import Dataset, gen_gaussian_clusters, make_split
from manifold_unlearn.metrics import (
    RESULTS_COLUMNS,
    MetricsRecord,
    accuracy,
    append_results_row,
    evaluate,
    threshold_attack,
)
from manifold_unlearn.nn import EncoderSpec, init_params


class TestThresholdAttack:
    def test_hand_computed(self):
        # tau = mean([1, 2, 3]) = 2; only 2.5 and 4 exceed it
        assert threshold_attack([0.5, 2.0, 2.5, 4.0], [1.0, 2.0, 3.0]) == 0.5

    def test_equal_to_tau_is_member(self):
        assert threshold_attack([2.0], [2.0]) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            threshold_attack([], [1.0])
        with pytest.raises(ValueError):
            threshold_attack([1.0], [])


class TestAccuracy:
    def test_ties_go_to_lowest_class(self):
        spec = EncoderSpec([1, 1, 2], ["identity", "identity"], head=True, bias=False)
        # zero head weights: every logit ties at 0, argmax picks class 0
        theta = np.array([1.0, 0.0, 0.0])
        ds = Dataset(np.ones((4, 1)), [0, 0, 1, 1], 2)
        assert accuracy(spec, theta, ds) == 0.5

    def test_needs_head(self):
        spec = EncoderSpec([1, 2], "identity")
        with pytest.raises(ValueError):
            accuracy(spec, np.zeros(4), Dataset(np.ones((1, 1)), [0], 1))


class TestRecord:
    def test_validation(self):
        with pytest.raises(ValueError):
            MetricsRecord(1.5, 0.5, 0.5, 0.0)
        with pytest.raises(ValueError):
            MetricsRecord(0.5, 0.5, 0.5, -1.0)

    def test_results_csv(self, tmp_path):
        path = tmp_path / "results.csv"
        append_results_row(path, "ga", 30, 5, "", MetricsRecord(0.25, 0.5, 0.75, 1.5))
        append_results_row(path, "retrain", 30, 5, "", MetricsRecord(0.1, 0.9, 0.8, 2.0))
        rows = list(csv.reader(path.open()))
        assert rows[0] == RESULTS_COLUMNS
        assert rows[1] == ["ga", "30", "5", "", "0.25", "0.5", "0.75", "1.5"]
        assert len(rows) == 3


def test_evaluate_mse_model():
    spec = EncoderSpec([2, 3, 2], ["tanh", "identity"])
    ds = gen_gaussian_clusters(2, 10, 2, 0.5, seed=0)
    params = init_params(spec, np.random.default_rng(0))
    split = make_split(ds, 4, 2, spec, params, seed=0)
    rec = evaluate(spec, params, split, ds, 0.0, loss="representation_mse")
    assert rec.ra is None and rec.ta is None
    assert rec.r_mse > 0 and rec.t_mse > 0
