# core/spectral_transfer.py
# Fourier-domain low-frequency amplitude swap between source and target images

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from utils.errors import SpectralTransferError

logger = logging.getLogger(__name__)

IMAG_RESIDUE_WARNING = 1e-6


@dataclass
class Image:
    """H x W x C raster, values nominally in [0,1]"""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise SpectralTransferError(f"image must be H x W x C with C in {{1,3}}, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise SpectralTransferError(f"image dimensions must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise SpectralTransferError("image contains non-finite values")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, c: int) -> np.ndarray:
        return self.data[:, :, c]


@dataclass
class Spectrum:
    """Unnormalized 2-D DFT of a single image channel, DC at (0,0)"""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise SpectralTransferError(f"spectrum must be a non-empty H x W matrix, got shape {values.shape}")
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MaskParams:
    beta: float

    def __post_init__(self):
        _check_beta(self.beta)


def _check_beta(beta: float):
    if not np.isfinite(beta) or not 0.0 < beta < 1.0:
        raise SpectralTransferError(f"beta must lie strictly inside (0,1), got {beta}")


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _radix2_fft(x: np.ndarray) -> np.ndarray:
    """Recursive radix-2 FFT along the last axis; length must be a power of two."""
    n = x.shape[-1]
    if n == 1:
        return x.astype(np.complex128)
    even = _radix2_fft(x[..., ::2])
    odd = _radix2_fft(x[..., 1::2])
    twiddled = np.exp(-2j * np.pi * np.arange(n // 2) / n) * odd
    return np.concatenate([even + twiddled, even - twiddled], axis=-1)


def _direct_dft(x: np.ndarray) -> np.ndarray:
    """O(N^2) DFT along the last axis by explicit summation against the DFT matrix."""
    n = x.shape[-1]
    k = np.arange(n)
    # reduce the exponent mod n before scaling to keep the phase exact for large k*j
    matrix = np.exp(-2j * np.pi * (np.outer(k, k) % n) / n)
    return x.astype(np.complex128) @ matrix.T


def _dft_last_axis(x: np.ndarray, fast: bool = True) -> np.ndarray:
    if fast and _is_power_of_two(x.shape[-1]):
        return _radix2_fft(x)
    return _direct_dft(x)


def dft2d_stack(x: np.ndarray, fast: bool = True) -> np.ndarray:
    """Forward 2-D DFT over the last two axes of a (..., H, W) array."""
    rows = _dft_last_axis(x, fast)
    cols = _dft_last_axis(np.swapaxes(rows, -1, -2), fast)
    return np.swapaxes(cols, -1, -2)


def _idft2_axes(values: np.ndarray) -> np.ndarray:
    """Inverse 2-D DFT with 1/(H*W) normalization over the last two axes."""
    h, w = values.shape[-2:]
    return np.conj(dft2d_stack(np.conj(values))) / (h * w)


def _validate_channel(channel) -> np.ndarray:
    channel = np.asarray(channel, dtype=np.float64)
    if channel.ndim != 2 or channel.shape[0] < 1 or channel.shape[1] < 1:
        raise SpectralTransferError(f"channel must be a non-empty H x W matrix, got shape {channel.shape}")
    if not np.all(np.isfinite(channel)):
        bad = int(np.count_nonzero(~np.isfinite(channel)))
        raise SpectralTransferError(f"channel contains {bad} non-finite entries")
    return channel


def dft2d(channel) -> Spectrum:
    """
    Unnormalized forward DFT of one channel, sign convention exp(-j2pi(hu/H + wv/W)).

    Power-of-two axes use the radix-2 path, every other size the direct summation.
    """
    return Spectrum(dft2d_stack(_validate_channel(channel)))


def direct_dft2d(channel) -> Spectrum:
    """Direct-summation DFT of one channel; independent of the radix-2 path."""
    return Spectrum(dft2d_stack(_validate_channel(channel), fast=False))


def idft2d_with_residue(spectrum: Spectrum) -> Tuple[np.ndarray, float]:
    """Inverse DFT returning the real part and the largest discarded imaginary magnitude."""
    result = _idft2_axes(spectrum.values)
    residue = float(np.max(np.abs(result.imag)))
    if residue > IMAG_RESIDUE_WARNING:
        logger.warning(f"Inverse DFT discarded an imaginary residue of {residue:.3e}")
    return result.real.copy(), residue


def idft2d(spectrum: Spectrum) -> np.ndarray:
    return idft2d_with_residue(spectrum)[0]


def _principal_phase(values: np.ndarray) -> np.ndarray:
    phase = np.angle(values)
    # principal value in (-pi, pi]; zero modulus maps to phase 0
    phase = np.where(phase <= -np.pi, np.pi, phase)
    return np.where(np.abs(values) == 0.0, 0.0, phase)


def amplitude(spectrum: Spectrum) -> np.ndarray:
    return np.abs(spectrum.values)


def phase(spectrum: Spectrum) -> np.ndarray:
    return _principal_phase(spectrum.values)


def reconstruct(amplitude_matrix: np.ndarray, phase_matrix: np.ndarray) -> Spectrum:
    """Combine amplitude and phase back into a complex spectrum."""
    amplitude_matrix = np.asarray(amplitude_matrix, dtype=np.float64)
    phase_matrix = np.asarray(phase_matrix, dtype=np.float64)
    if amplitude_matrix.shape != phase_matrix.shape:
        raise SpectralTransferError(
            f"amplitude {amplitude_matrix.shape} and phase {phase_matrix.shape} shapes differ"
        )
    return Spectrum(amplitude_matrix * np.exp(1j * phase_matrix))


def low_freq_mask(height: int, width: int, beta: float) -> np.ndarray:
    """
    Binary low-frequency selector around the unshifted DC bin.

    With b_h = floor(beta*H) and b_w = floor(beta*W), bin (h,w) is selected iff
    min(h, H-h) <= b_h and min(w, W-w) <= b_w. The band wraps around the edges.
    """
    _check_beta(beta)
    if height < 1 or width < 1:
        raise SpectralTransferError(f"mask dimensions must be positive, got {height}x{width}")
    b_h = int(np.floor(beta * height))
    b_w = int(np.floor(beta * width))
    rows = np.arange(height)
    cols = np.arange(width)
    row_in = np.minimum(rows, height - rows) <= b_h
    col_in = np.minimum(cols, width - cols) <= b_w
    return np.outer(row_in, col_in).astype(np.uint8)


@dataclass
class SpectralStack:
    """Amplitude and principal phase of a (..., H, W) stack, kept for repeated transfers"""
    amplitude: np.ndarray
    phase: np.ndarray

    @classmethod
    def of(cls, values: np.ndarray) -> "SpectralStack":
        spectrum = dft2d_stack(np.asarray(values, dtype=np.float64))
        return cls(np.abs(spectrum), _principal_phase(spectrum))


def mix_low_frequencies(source: SpectralStack, target_amplitude: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Inverse transform of the source spectrum with its in-band amplitude replaced.

    Args:
        source: spectra of the images being restyled
        target_amplitude: amplitude spectra of the same shape as source.amplitude
        mask: H x W low-frequency selector from low_freq_mask
    """
    if target_amplitude.shape != source.amplitude.shape:
        raise SpectralTransferError(
            f"target amplitude {target_amplitude.shape} differs from source spectrum {source.amplitude.shape}"
        )
    mask = np.asarray(mask, dtype=np.float64)
    mixed_amplitude = mask * target_amplitude + (1.0 - mask) * source.amplitude
    result = _idft2_axes(mixed_amplitude * np.exp(1j * source.phase))
    residue = float(np.max(np.abs(result.imag))) if result.size else 0.0
    if residue > IMAG_RESIDUE_WARNING:
        logger.warning(f"Spectral transfer discarded an imaginary residue of {residue:.3e}")
    return result.real


def _swap_low_frequencies(source: np.ndarray, target: np.ndarray, beta: float) -> np.ndarray:
    """Amplitude swap over the last two axes of equally shaped (..., H, W) stacks."""
    h, w = source.shape[-2:]
    target_amplitude = np.abs(dft2d_stack(target))
    return mix_low_frequencies(SpectralStack.of(source), target_amplitude, low_freq_mask(h, w, beta))


def fda_transfer(source: Image, target: Image, beta: float) -> Image:
    """
    Replace the low-frequency amplitude of `source` with that of `target`.

    Each channel is transformed independently and keeps the source phase. Output
    pixels are not clamped.
    """
    _check_beta(beta)
    if source.data.shape != target.data.shape:
        raise SpectralTransferError(
            f"source shape {source.data.shape} differs from target shape {target.data.shape}"
        )
    # channels-first so the transform runs over the trailing H, W axes
    src = np.moveaxis(source.data, -1, 0)
    trg = np.moveaxis(target.data, -1, 0)
    return Image(np.moveaxis(_swap_low_frequencies(src, trg, beta), 0, -1))


def fda_transfer_batch(sources: np.ndarray, targets: np.ndarray, beta: float) -> np.ndarray:
    """Apply fda_transfer pairwise to N x H x W x C stacks."""
    _check_beta(beta)
    sources = np.asarray(sources, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if sources.shape != targets.shape or sources.ndim != 4:
        raise SpectralTransferError(
            f"source stack {sources.shape} and target stack {targets.shape} must match as N x H x W x C"
        )
    if len(sources) == 0:
        return sources.copy()
    src = np.moveaxis(sources, -1, 1)
    trg = np.moveaxis(targets, -1, 1)
    return np.moveaxis(_swap_low_frequencies(src, trg, beta), 1, -1)


def in_band_amplitude_gap(image_a: np.ndarray, image_b: np.ndarray, beta: float) -> Tuple[float, float]:
    """
    Mean absolute amplitude difference between two channels (or stacks of channels)
    inside and outside the low-frequency band.

    Returns:
        (mean gap inside the band, mean gap outside the band)
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise SpectralTransferError(f"shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape[-2:]
    mask = low_freq_mask(h, w, beta).astype(bool)
    gap = np.abs(np.abs(dft2d_stack(a)) - np.abs(dft2d_stack(b)))
    gap = gap.reshape(-1, h, w).mean(axis=0)
    outside = float(gap[~mask].mean()) if np.any(~mask) else 0.0
    return float(gap[mask].mean()), outside
