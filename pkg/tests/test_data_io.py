# tests/test_data_io.py
# Feature/head/Netpbm file formats and seeded random streams

import os
import struct
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.datasets import FeatureSet
from core.margin_model import LinearHead
from core.spectral_transfer import Image
from utils.data_io import (
    decode_feature_set,
    decode_head,
    decode_netpbm,
    encode_feature_set,
    encode_head,
    encode_netpbm,
    quantize,
    read_feature_file,
    read_head_file,
    read_pgm,
    read_ppm,
    write_feature_file,
    write_head_file,
    write_pgm,
    write_ppm,
)
from utils.errors import (
    BadMagicError,
    DataIOError,
    MalformedInputError,
    NetpbmFormatError,
    TrailingBytesError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from utils.seeding import SELECTION, SHUFFLING, draw_without_replacement, seeded_stream


def hand_built_feature_bytes():
    """2 x 3 labeled feature file written field by field"""
    header = b"FEAT" + struct.pack("<I", 1) + struct.pack("<Q", 2) + struct.pack("<Q", 3) + b"\x01"
    features = struct.pack("<6f", 1.0, 2.0, 3.0, -0.5, 0.25, 8.0)
    labels = struct.pack("<2i", 0, 2)
    tags = b"\x00\x01"
    return header + features + labels + tags


class TestFeatureFiles(unittest.TestCase):

    def test_decode_hand_built_file(self):
        feature_set = decode_feature_set(hand_built_feature_bytes())
        np.testing.assert_array_equal(feature_set.features, [[1.0, 2.0, 3.0], [-0.5, 0.25, 8.0]])
        np.testing.assert_array_equal(feature_set.labels, [0, 2])
        np.testing.assert_array_equal(feature_set.domain_tags, [0, 1])
        self.assertEqual(feature_set.features.dtype, np.float64)

    def test_encode_matches_layout(self):
        feature_set = FeatureSet([[1.0, 2.0, 3.0], [-0.5, 0.25, 8.0]], [0, 2], [0, 1])
        self.assertEqual(encode_feature_set(feature_set), hand_built_feature_bytes())

    def test_unlabeled_and_empty_sets(self):
        unlabeled = decode_feature_set(encode_feature_set(FeatureSet(np.ones((3, 2)))))
        self.assertIsNone(unlabeled.labels)
        empty = decode_feature_set(encode_feature_set(FeatureSet(np.zeros((0, 4)), np.zeros(0))))
        self.assertEqual(empty.features.shape, (0, 4))
        self.assertEqual(len(empty.labels), 0)

    def test_file_round_trip(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((5, 4)).astype(np.float32).astype(np.float64)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'set.feat')
            write_feature_file(FeatureSet(values, [0, 1, 2, 1, 0], [1] * 5), path)
            restored = read_feature_file(path)
        np.testing.assert_array_equal(restored.features, values)
        np.testing.assert_array_equal(restored.domain_tags, [1] * 5)

    def test_malformed_files(self):
        good = hand_built_feature_bytes()
        with self.assertRaises(BadMagicError):
            decode_feature_set(b"FEAX" + good[4:])
        with self.assertRaises(TruncatedFileError):
            decode_feature_set(good[:-1])
        with self.assertRaises(TruncatedFileError):
            decode_feature_set(good[:10])
        with self.assertRaises(TrailingBytesError):
            decode_feature_set(good + b"\x00")
        with self.assertRaises(UnsupportedVersionError):
            decode_feature_set(good[:4] + struct.pack("<I", 2) + good[8:])
        with self.assertRaises(DataIOError):
            decode_feature_set(good[:-1] + b"\x02")

    def test_errors_map_to_malformed_input(self):
        self.assertTrue(issubclass(BadMagicError, MalformedInputError))
        self.assertEqual(BadMagicError("x").exit_code, 2)
        with self.assertRaises(DataIOError):
            read_feature_file(os.path.join(tempfile.gettempdir(), 'does-not-exist.feat'))


class TestHeadFiles(unittest.TestCase):

    def test_round_trip_is_exact(self):
        rng = np.random.default_rng(1)
        head = LinearHead(rng.standard_normal((3, 5)), rng.standard_normal(3))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'head.sdmh')
            write_head_file(head, path)
            restored = read_head_file(path)
        np.testing.assert_array_equal(restored.weights, head.weights)
        np.testing.assert_array_equal(restored.bias, head.bias)

    def test_malformed_heads(self):
        payload = encode_head(LinearHead.zeros(2, 3))
        self.assertEqual(payload[:4], b"SDMH")
        self.assertEqual(len(payload), 16 + 8 * (6 + 2))
        with self.assertRaises(BadMagicError):
            decode_head(b"FEAT" + payload[4:])
        with self.assertRaises(TruncatedFileError):
            decode_head(payload[:-8])
        with self.assertRaises(TrailingBytesError):
            decode_head(payload + b"\x00")


class TestNetpbm(unittest.TestCase):

    def test_single_white_pixel(self):
        image = decode_netpbm(b"P5\n1 1\n255\n\xff")
        self.assertEqual(image.data.shape, (1, 1, 1))
        self.assertEqual(image.data[0, 0, 0], 1.0)

    def test_header_comments_are_skipped(self):
        image = decode_netpbm(b"P5\n# written by hand\n2 1\n# maxval next\n255\n\x00\xff")
        np.testing.assert_array_equal(image.data[:, :, 0], [[0.0, 1.0]])

    def test_color_pixel_order(self):
        image = decode_netpbm(b"P6 1 1 255\n\xff\x00\x33")
        np.testing.assert_allclose(image.data[0, 0], [1.0, 0.0, 0.2])

    def test_rejected_headers(self):
        with self.assertRaises(NetpbmFormatError):
            decode_netpbm(b"P5\n1 1\n65535\n\x00\xff")
        with self.assertRaises(NetpbmFormatError):
            decode_netpbm(b"P3\n1 1\n255\n\xff")
        with self.assertRaises(NetpbmFormatError):
            decode_netpbm(b"P5\n0 1\n255\n")
        with self.assertRaises(TruncatedFileError):
            decode_netpbm(b"P5\n2 2\n255\n\x00\x00")
        with self.assertRaises(TrailingBytesError):
            decode_netpbm(b"P5\n1 1\n255\n\x00\x00")

    def test_quantize_clamps_and_rounds(self):
        np.testing.assert_array_equal(quantize(np.array([-0.2, 0.0, 0.5, 1.0, 1.7])), [0, 0, 128, 255, 255])

    def test_write_and_read_back(self):
        gray = Image(np.array([[0.0, 0.5], [1.0, 0.25]]))
        color = Image(np.zeros((2, 3, 3)))
        with tempfile.TemporaryDirectory() as tmp:
            pgm = os.path.join(tmp, 'gray.pgm')
            ppm = os.path.join(tmp, 'color.ppm')
            write_pgm(gray, pgm)
            write_ppm(color, ppm)
            np.testing.assert_array_equal(read_pgm(pgm).data, quantize(gray.data) / 255.0)
            self.assertEqual(read_ppm(ppm).data.shape, (2, 3, 3))
            with self.assertRaises(NetpbmFormatError):
                read_ppm(pgm)
            with self.assertRaises(NetpbmFormatError):
                write_ppm(gray, ppm)

    def test_encoded_header(self):
        self.assertEqual(encode_netpbm(Image(np.ones((1, 2, 1))))[:10], b"P5\n2 1\n255")


class TestSeeding(unittest.TestCase):

    def test_same_label_same_sequence(self):
        a = seeded_stream(42, SHUFFLING).random(5)
        b = seeded_stream(42, SHUFFLING).random(5)
        np.testing.assert_array_equal(a, b)

    def test_labels_paths_and_seeds_are_independent(self):
        base = seeded_stream(42, SHUFFLING).random(5)
        self.assertFalse(np.array_equal(base, seeded_stream(42, SELECTION).random(5)))
        self.assertFalse(np.array_equal(base, seeded_stream(43, SHUFFLING).random(5)))
        self.assertFalse(np.array_equal(seeded_stream(42, SELECTION, 0).random(5),
                                        seeded_stream(42, SELECTION, 1).random(5)))

    def test_large_seeds_are_accepted(self):
        values = seeded_stream(2 ** 64 - 1, SHUFFLING).integers(0, 10, 3)
        self.assertEqual(len(values), 3)

    def test_draw_without_replacement(self):
        rng = seeded_stream(0, SELECTION)
        drawn = draw_without_replacement(rng, np.arange(50), 20)
        self.assertEqual(len(set(drawn.tolist())), 20)
        with self.assertRaises(ValueError):
            draw_without_replacement(rng, np.arange(3), 4)


if __name__ == '__main__':
    unittest.main()
