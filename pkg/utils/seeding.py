import hashlib
from typing import Union

import numpy as np

# Stream labels used across the toolkit
SHUFFLING = "shuffling"
SELECTION = "selection"
PAIRING = "pairing"
GENERATION = "generation"
FEATURIZER = "featurizer"

_MASK64 = (1 << 64) - 1


def _label_words(label: str) -> list:
    """Stable 4x32-bit words derived from a stream label."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def seeded_stream(master_seed: int, label: str, *path: Union[int, str]) -> np.random.Generator:
    """
    Create a deterministic random stream for a labeled purpose.

    The same (master_seed, label, path) always yields the same sequence; different
    labels yield independent sequences. `path` lets parallel work derive child
    streams, e.g. seeded_stream(seed, "generation", "source", 17) for sample 17.

    Args:
        master_seed: 64-bit unsigned master seed
        label: stream purpose (shuffling, selection, pairing, generation, ...)
        path: optional sub-stream coordinates

    Returns:
        A numpy Generator backed by PCG64
    """
    seed = int(master_seed) & _MASK64
    entropy = [seed & 0xFFFFFFFF, seed >> 32]
    entropy.extend(_label_words(label))
    for part in path:
        if isinstance(part, str):
            entropy.extend(_label_words(part))
        else:
            entropy.append(int(part) & 0xFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def draw_without_replacement(rng: np.random.Generator, population: np.ndarray, k: int) -> np.ndarray:
    """Draw k distinct elements of `population` in draw order."""
    population = np.asarray(population)
    if k > len(population):
        raise ValueError(f"cannot draw {k} items from a population of {len(population)}")
    return rng.choice(population, size=k, replace=False)
