# tests/test_calibration_metrics.py
# Reliability bins, ECE/MCE and per-class accuracy

import json
import math
import os
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.calibration_metrics import (
    PredictionLog,
    bin_indices,
    ece,
    ece_from_bins,
    mce,
    per_class_accuracy,
    read_bins_csv,
    reliability_bins,
    write_bins_csv,
)
from utils.errors import CalibrationError

FIXTURE_PATH = os.path.join(os.path.dirname(__file__), 'fixture.json')


def load_fixture(section):
    with open(FIXTURE_PATH) as f:
        return json.load(f)[section]


class TestReliabilityBins(unittest.TestCase):

    def test_bin_edges_are_closed_on_the_right(self):
        np.testing.assert_array_equal(bin_indices(np.array([0.1, 0.5, 0.55, 1.0, 0.01]), 10), [1, 5, 6, 10, 1])

    def test_bins_cover_every_sample(self):
        rng = np.random.default_rng(0)
        log = PredictionLog(rng.uniform(0.01, 1.0, 200), rng.integers(0, 3, 200), rng.integers(0, 3, 200))
        bins = reliability_bins(log, 15)
        self.assertEqual(len(bins), 15)
        self.assertEqual(sum(b.count for b in bins), 200)
        self.assertEqual(bins[0].lower, 0.0)
        self.assertEqual(bins[-1].upper, 1.0)
        for b in bins:
            if b.count:
                self.assertTrue(b.lower < b.mean_confidence <= b.upper)
            else:
                self.assertEqual((b.mean_confidence, b.accuracy), (0.0, 0.0))

    def test_round_trip_through_csv(self):
        log = PredictionLog([0.95, 0.95, 0.6, 0.3], [1, 0, 2, 2], [1, 1, 2, 0])
        bins = reliability_bins(log)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'bins.csv')
            write_bins_csv(bins, path)
            restored, value = read_bins_csv(path)
        self.assertEqual(restored, bins)
        self.assertEqual(value, ece_from_bins(bins))


class TestCalibrationError(unittest.TestCase):

    def test_fixture_cases(self):
        for case in load_fixture('ece'):
            with self.subTest(case=case['test_name']):
                log = PredictionLog(case['confidences'], case['predicted'], case['actual'])
                self.assertAlmostEqual(ece(log, case['n_bins']), case['expected_ece'], places=12)

    def test_perfectly_calibrated_bin(self):
        log = PredictionLog([0.75] * 4, [0, 1, 2, 0], [0, 1, 2, 1])
        self.assertEqual(ece(log), 0.0)
        self.assertEqual(mce(log), 0.0)

    def test_mce_is_the_worst_bin(self):
        log = PredictionLog([0.95, 0.95, 0.6], [1, 0, 1], [1, 1, 1])
        self.assertAlmostEqual(mce(log), 0.45, places=12)
        self.assertAlmostEqual(ece(log), 2 / 3 * 0.45 + 1 / 3 * 0.4, places=12)
        self.assertLessEqual(ece(log), mce(log))

    def test_ece_stays_in_unit_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(1, 50))
            log = PredictionLog(rng.uniform(0.01, 1.0, n), rng.integers(0, 4, n), rng.integers(0, 4, n))
            value = ece(log, int(rng.integers(1, 20)))
            self.assertTrue(0.0 <= value <= 1.0)

    def test_invalid_logs(self):
        with self.assertRaises(CalibrationError):
            ece(PredictionLog([], [], []))
        with self.assertRaises(CalibrationError):
            ece(PredictionLog([0.5], [0], [0]), 0)
        with self.assertRaises(CalibrationError):
            PredictionLog([0.0], [0], [0])
        with self.assertRaises(CalibrationError):
            PredictionLog([1.2], [0], [0])
        with self.assertRaises(CalibrationError):
            PredictionLog([0.5, 0.5], [0], [0, 1])


class TestPerClassAccuracy(unittest.TestCase):

    def test_fixture_cases(self):
        for case in load_fixture('per_class_accuracy'):
            with self.subTest(case=case['test_name']):
                log = PredictionLog([0.9] * len(case['actual']), case['predicted'], case['actual'])
                accuracies, average = per_class_accuracy(log, case['num_classes'])
                self.assertEqual(accuracies, case['expected'])
                self.assertAlmostEqual(average, case['expected_average'], places=10)

    def test_class_without_samples_is_nan(self):
        log = PredictionLog([0.9] * 4, [0, 1, 1, 2], [0, 1, 2, 2])
        with self.assertLogs('core.calibration_metrics', level='WARNING'):
            accuracies, average = per_class_accuracy(log, 4)
        self.assertTrue(math.isnan(accuracies[3]))
        self.assertEqual(accuracies[:3], [100.0, 100.0, 50.0])
        self.assertAlmostEqual(average, 250.0 / 3)

    def test_class_out_of_range(self):
        log = PredictionLog([0.9, 0.9], [0, 3], [0, 1])
        with self.assertRaises(CalibrationError):
            per_class_accuracy(log, 3)


if __name__ == '__main__':
    unittest.main()
