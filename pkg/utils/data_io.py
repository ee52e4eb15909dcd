"""
Binary file formats shared by the toolkit.

- FEAT: feature matrices with optional labels and domain tags (f32 on disk, f64 in memory)
- SDMH: trained linear heads (f64)
- PGM (P5) / PPM (P6): 8-bit images, maxval 255, mapped to [0,1]
"""

import logging
import struct
import sys
from typing import Tuple

import numpy as np

from core.datasets import FeatureSet
from core.margin_model import LinearHead
from core.spectral_transfer import Image
from utils.errors import (
    BadMagicError,
    DataIOError,
    NetpbmFormatError,
    SizeOverflowError,
    TrailingBytesError,
    TruncatedFileError,
    UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"FEAT"
FEATURE_VERSION = 1
FEATURE_HEADER = struct.Struct("<4sIQQB")

HEAD_MAGIC = b"SDMH"
HEAD_VERSION = 1
HEAD_HEADER = struct.Struct("<4sIII")

_MAX_ELEMENTS = sys.maxsize // 8


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise DataIOError(f"Failed to read {path}: {e}") from e


def _write_bytes(path: str, payload: bytes):
    try:
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as e:
        raise DataIOError(f"Failed to write {path}: {e}") from e


# ---------------------------------------------------------------------------
# feature files

def encode_feature_set(feature_set: FeatureSet) -> bytes:
    n, d = feature_set.features.shape
    has_labels = feature_set.labels is not None
    parts = [
        FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, d, int(has_labels)),
        feature_set.features.astype("<f4").tobytes(order="C"),
    ]
    if has_labels:
        parts.append(feature_set.labels.astype("<i4").tobytes())
    parts.append(feature_set.domain_tags.astype("u1").tobytes())
    return b"".join(parts)


def decode_feature_set(payload: bytes, source: str = "<bytes>") -> FeatureSet:
    if payload[:4] != FEATURE_MAGIC:
        raise BadMagicError(f"{source}: bad magic {payload[:4]!r}, expected {FEATURE_MAGIC!r}")
    if len(payload) < FEATURE_HEADER.size:
        raise TruncatedFileError(f"{source}: header needs {FEATURE_HEADER.size} bytes, file has {len(payload)}")
    _, version, n, d, has_labels = FEATURE_HEADER.unpack_from(payload)
    if version != FEATURE_VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported feature file version {version}")
    if has_labels not in (0, 1):
        raise DataIOError(f"{source}: has_labels flag must be 0 or 1, got {has_labels}")
    if n > _MAX_ELEMENTS or (d and n * d > _MAX_ELEMENTS):
        raise SizeOverflowError(f"{source}: declared size N={n}, D={d} overflows")

    offset = FEATURE_HEADER.size
    sizes = [n * d * 4, n * 4 * has_labels, n]
    expected = offset + sum(sizes)
    if len(payload) < expected:
        raise TruncatedFileError(f"{source}: expected {expected} bytes, file has {len(payload)}")
    if len(payload) > expected:
        raise TrailingBytesError(f"{source}: {len(payload) - expected} trailing bytes after payload")

    features = np.frombuffer(payload, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    offset += sizes[0]
    labels = None
    if has_labels:
        labels = np.frombuffer(payload, dtype="<i4", count=n, offset=offset).astype(np.int64)
        offset += sizes[1]
    tags = np.frombuffer(payload, dtype="u1", count=n, offset=offset).copy()
    if np.any(tags > 1):
        raise DataIOError(f"{source}: domain tags must be 0 (source) or 1 (target)")
    return FeatureSet(features.astype(np.float64), labels, tags)


def read_feature_file(path: str) -> FeatureSet:
    feature_set = decode_feature_set(_read_bytes(path), path)
    logger.info(f"Read {len(feature_set)} x {feature_set.dim} features from {path}")
    return feature_set


def write_feature_file(feature_set: FeatureSet, path: str):
    _write_bytes(path, encode_feature_set(feature_set))
    logger.info(f"Wrote {len(feature_set)} x {feature_set.dim} features to {path}")


# ---------------------------------------------------------------------------
# head files

def encode_head(head: LinearHead) -> bytes:
    k, d = head.weights.shape
    return b"".join([
        HEAD_HEADER.pack(HEAD_MAGIC, HEAD_VERSION, k, d),
        head.weights.astype("<f8").tobytes(order="C"),
        head.bias.astype("<f8").tobytes(),
    ])


def decode_head(payload: bytes, source: str = "<bytes>") -> LinearHead:
    if payload[:4] != HEAD_MAGIC:
        raise BadMagicError(f"{source}: bad magic {payload[:4]!r}, expected {HEAD_MAGIC!r}")
    if len(payload) < HEAD_HEADER.size:
        raise TruncatedFileError(f"{source}: header needs {HEAD_HEADER.size} bytes, file has {len(payload)}")
    _, version, k, d = HEAD_HEADER.unpack_from(payload)
    if version != HEAD_VERSION:
        raise UnsupportedVersionError(f"{source}: unsupported head file version {version}")
    expected = HEAD_HEADER.size + 8 * (k * d + k)
    if len(payload) < expected:
        raise TruncatedFileError(f"{source}: expected {expected} bytes, file has {len(payload)}")
    if len(payload) > expected:
        raise TrailingBytesError(f"{source}: {len(payload) - expected} trailing bytes after payload")
    weights = np.frombuffer(payload, dtype="<f8", count=k * d, offset=HEAD_HEADER.size).reshape(k, d)
    bias = np.frombuffer(payload, dtype="<f8", count=k, offset=HEAD_HEADER.size + 8 * k * d)
    return LinearHead(weights.copy(), bias.copy())


def read_head_file(path: str) -> LinearHead:
    return decode_head(_read_bytes(path), path)


def write_head_file(head: LinearHead, path: str):
    _write_bytes(path, encode_head(head))
    logger.info(f"Wrote {head.num_classes} x {head.feature_dim} head to {path}")


# ---------------------------------------------------------------------------
# netpbm images

_NETPBM_CHANNELS = {b"P5": 1, b"P6": 3}
_WHITESPACE = b" \t\n\r\v\f"


def _parse_netpbm_header(payload: bytes, source: str) -> Tuple[bytes, int, int, int, int]:
    """Return (magic, width, height, maxval, payload offset); '#' comments are skipped."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(payload) and payload[pos:pos + 1] in _WHITESPACE:
            pos += 1
        if pos < len(payload) and payload[pos:pos + 1] == b"#":
            end = payload.find(b"\n", pos)
            if end < 0:
                raise NetpbmFormatError(f"{source}: header ends inside a comment")
            pos = end + 1
            continue
        start = pos
        while pos < len(payload) and payload[pos:pos + 1] not in _WHITESPACE and payload[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise TruncatedFileError(f"{source}: header is incomplete")
        tokens.append(payload[start:pos])
    if pos >= len(payload):
        raise TruncatedFileError(f"{source}: no pixel data after header")
    # exactly one whitespace byte separates maxval from the raster
    pos += 1

    magic = tokens[0]
    if magic not in _NETPBM_CHANNELS:
        raise NetpbmFormatError(f"{source}: unsupported format token {magic!r}, expected P5 or P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise NetpbmFormatError(f"{source}: malformed header values {tokens[1:]}: {e}") from e
    if width < 1 or height < 1:
        raise NetpbmFormatError(f"{source}: image dimensions must be positive, got {width}x{height}")
    if maxval != 255:
        raise NetpbmFormatError(f"{source}: maxval must be 255, got {maxval}")
    return magic, width, height, maxval, pos


def decode_netpbm(payload: bytes, source: str = "<bytes>", expected_magic: bytes = None) -> Image:
    magic, width, height, _, offset = _parse_netpbm_header(payload, source)
    if expected_magic is not None and magic != expected_magic:
        raise NetpbmFormatError(f"{source}: expected {expected_magic.decode()}, found {magic.decode()}")
    channels = _NETPBM_CHANNELS[magic]
    size = width * height * channels
    raster = payload[offset:]
    if len(raster) < size:
        raise TruncatedFileError(f"{source}: expected {size} pixel bytes, found {len(raster)}")
    if len(raster) > size:
        raise TrailingBytesError(f"{source}: {len(raster) - size} trailing bytes after raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    return Image(pixels.astype(np.float64) / 255.0)


def quantize(data: np.ndarray) -> np.ndarray:
    """Clamp to [0,1] and round half-up to 8 bits."""
    return np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_netpbm(image: Image) -> bytes:
    magic = b"P6" if image.channels == 3 else b"P5"
    header = magic + f"\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + quantize(image.data).tobytes(order="C")


def read_image(path: str) -> Image:
    return decode_netpbm(_read_bytes(path), path)


def read_ppm(path: str) -> Image:
    return decode_netpbm(_read_bytes(path), path, b"P6")


def read_pgm(path: str) -> Image:
    return decode_netpbm(_read_bytes(path), path, b"P5")


def write_image(image: Image, path: str):
    _write_bytes(path, encode_netpbm(image))


def write_ppm(image: Image, path: str):
    if image.channels != 3:
        raise NetpbmFormatError(f"PPM needs 3 channels, image has {image.channels}")
    write_image(image, path)


def write_pgm(image: Image, path: str):
    if image.channels != 1:
        raise NetpbmFormatError(f"PGM needs 1 channel, image has {image.channels}")
    write_image(image, path)
