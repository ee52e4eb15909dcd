import json
import os
import sys
import unittest
from dataclasses import replace

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.active_loop import apply_fda_to_source
from core.datasets import DomainTag
from core.margin_model import LinearHead, predict_batch, train_head
from core.synthetic_data import (
    DomainShift,
    DomainStyle,
    GaussianBenchSpec,
    TextureBenchSpec,
    domain_amplitude_gap,
    dominant_high_frequency_bin,
    make_gaussian_bench,
    make_texture_bench,
)
from utils.errors import SyntheticDataError

with open(os.path.join(os.path.dirname(__file__), "fixture.json")) as f:
    GAUSSIAN_BENCH = json.load(f)["gaussian_bench"]


def canonical_bin(u, v, n):
    """A real image has equal amplitude at (u,v) and (-u,-v); pick one representative."""
    return min((u % n, v % n), ((-u) % n, (-v) % n))


class TestGaussianBench(unittest.TestCase):

    def test_same_seed_same_bench(self):
        spec = GaussianBenchSpec(samples_per_class=20, seed=5)
        first = make_gaussian_bench(spec)
        second = make_gaussian_bench(spec)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.features, b.features)
            np.testing.assert_array_equal(a.labels, b.labels)

    def test_split_is_stratified(self):
        source, pool, test = make_gaussian_bench(GaussianBenchSpec(samples_per_class=50))
        self.assertEqual(len(source), 150)
        np.testing.assert_array_equal(np.bincount(pool.labels), [40, 40, 40])
        np.testing.assert_array_equal(np.bincount(test.labels), [10, 10, 10])
        self.assertTrue(np.all(source.domain_tags == DomainTag.SOURCE.value))
        self.assertTrue(np.all(pool.domain_tags == DomainTag.TARGET.value))

    def test_rotation_moves_target_means(self):
        spec = GaussianBenchSpec(samples_per_class=200, noise_sigma=0.1,
                                 shift=DomainShift(rotation_angle=90.0))
        source, pool, _ = make_gaussian_bench(spec)
        source_mean = source.features[source.labels == 0].mean(axis=0)
        target_mean = pool.features[pool.labels == 0].mean(axis=0)
        np.testing.assert_allclose(source_mean, [3.0, 0.0], atol=0.05)
        np.testing.assert_allclose(target_mean, [0.0, 3.0], atol=0.05)

    def test_translation_from_dict(self):
        spec = GaussianBenchSpec(feature_dim=3, shift={"translation": [1.0, 0.0, -2.0]})
        self.assertIsInstance(spec.shift, DomainShift)
        with self.assertRaises(SyntheticDataError):
            GaussianBenchSpec(shift={"translation": [1.0]})

    def test_invalid_specs(self):
        with self.assertRaises(SyntheticDataError):
            GaussianBenchSpec(num_classes=1)
        with self.assertRaises(SyntheticDataError):
            GaussianBenchSpec(noise_sigma=0.0)
        with self.assertRaises(SyntheticDataError):
            GaussianBenchSpec(samples_per_class=0)


def source_trained_accuracies(spec):
    """Accuracy of a source-only head on a fresh source draw and on the target test split"""
    source, _, test = make_gaussian_bench(spec)
    held_out = make_gaussian_bench(replace(spec, seed=spec.seed + 100))[0]
    head, _ = train_head(LinearHead.zeros(spec.num_classes, spec.feature_dim), source.features, source.labels)
    accuracy = []
    for split in (held_out, test):
        predicted, _ = predict_batch(head, split.features)
        accuracy.append(float(np.mean(predicted == split.labels)))
    return tuple(accuracy)


class TestGaussianBenchDifficulty(unittest.TestCase):

    def test_identity_shift_matches_source_accuracy(self):
        case = GAUSSIAN_BENCH["identity"]
        gaps = []
        for seed in range(case["seeds"]):
            source_accuracy, target_accuracy = source_trained_accuracies(GaussianBenchSpec(seed=seed))
            gaps.append(abs(target_accuracy - source_accuracy))
        self.assertLessEqual(np.mean(gaps), case["max_mean_accuracy_gap"])

    def test_rotated_and_translated_target_defeats_source_head(self):
        case = GAUSSIAN_BENCH["rotated"]
        shift = DomainShift(case["rotation_angle"], case["translation"])
        accuracies = np.array([
            source_trained_accuracies(GaussianBenchSpec(noise_sigma=case["noise_sigma"], shift=shift, seed=seed))
            for seed in range(case["seeds"])
        ])
        source_accuracy, target_accuracy = accuracies.mean(axis=0)
        self.assertGreaterEqual(source_accuracy, case["min_source_accuracy"])
        self.assertLess(target_accuracy, case["max_target_accuracy"])


class TestTextureBench(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.spec = TextureBenchSpec(samples_per_class=30, seed=3)
        cls.source, cls.pool, cls.test = make_texture_bench(cls.spec)

    def test_shapes_and_range(self):
        self.assertEqual(self.source.images.shape, (90, 32, 32, 1))
        self.assertEqual(len(self.pool) + len(self.test), 90)
        self.assertTrue(np.all((self.source.images >= 0.0) & (self.source.images <= 1.0)))

    def test_same_seed_same_images(self):
        again, _, _ = make_texture_bench(self.spec)
        np.testing.assert_array_equal(again.images, self.source.images)

    def test_domains_differ_mostly_at_low_frequencies(self):
        inside, outside = domain_amplitude_gap(self.source.images, self.pool.images, 0.1)
        self.assertGreater(inside, 5 * outside)

    def test_spectral_transfer_closes_the_low_frequency_gap(self):
        before, _ = domain_amplitude_gap(self.source.images, self.pool.images, 0.1)
        transferred = apply_fda_to_source(self.source.images, self.pool.images, 0.1, seed=0)
        after, _ = domain_amplitude_gap(transferred, self.pool.images, 0.1)
        self.assertLessEqual(after, 0.1 * before)

    def test_spectral_transfer_keeps_class_pattern(self):
        n = self.spec.image_size
        transferred = apply_fda_to_source(self.source.images, self.pool.images, 0.1, seed=0)
        frequencies = self.spec.class_frequencies()
        for i in range(0, len(self.source), 7):
            before = canonical_bin(*dominant_high_frequency_bin(self.source.images[i, :, :, 0], 0.1), n)
            after = canonical_bin(*dominant_high_frequency_bin(transferred[i, :, :, 0], 0.1), n)
            self.assertEqual(before, after)
            self.assertEqual(before, canonical_bin(*frequencies[self.source.labels[i]], n))

    def test_class_frequencies_cycle_orientations(self):
        spec = TextureBenchSpec(num_classes=5, samples_per_class=1)
        self.assertEqual(spec.class_frequencies(), [(8, 0), (0, 8), (8, 8), (8, -8), (9, 0)])

    def test_invalid_specs(self):
        bad = [
            {"image_size": 12},
            {"channels": 2},
            {"num_classes": 1},
            {"pattern_frequency": 1},
            {"domain_styles": [DomainStyle(0.4, 0.1, (5, 0)), DomainStyle(0.5, 0.1, (1, 0))]},
            {"domain_styles": [DomainStyle(0.4, 0.1, (0, 1))]},
        ]
        for values in bad:
            with self.subTest(values=values):
                with self.assertRaises(SyntheticDataError):
                    TextureBenchSpec(**values)

    def test_color_bench(self):
        source, _, _ = make_texture_bench(TextureBenchSpec(samples_per_class=2, channels=3, image_size=16))
        self.assertEqual(source.images.shape, (6, 16, 16, 3))


if __name__ == '__main__':
    unittest.main()
