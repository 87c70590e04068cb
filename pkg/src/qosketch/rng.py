"""Counter-based random streams.

Every random quantity is a pure function of ``(seed, stream, row, counter)``,
so a node's signature does not depend on which other nodes were sampled,
in what order, or on how many threads did the work.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

STREAM_SIGN = 1
STREAM_GAUSS_A = 2
STREAM_GAUSS_B = 3


def splitmix64(x):
    """The splitmix64 finalizer, applied elementwise to a uint64 array."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _key(seed: int, stream: int) -> np.uint64:
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    return splitmix64(splitmix64(s) ^ np.uint64(stream))


def hash_words(seed: int, stream: int, rows, n_words: int) -> np.ndarray:
    """Return a ``(len(rows), n_words)`` uint64 array of hashed counters."""
    rows = np.asarray(rows, dtype=np.uint64).reshape(-1, 1)
    cols = np.arange(n_words, dtype=np.uint64).reshape(1, -1)
    key = _key(seed, stream)
    with np.errstate(over="ignore"):
        return splitmix64(splitmix64(key ^ splitmix64(rows)) + cols)


def random_signs(seed: int, rows, width: int) -> np.ndarray:
    """Rademacher (+1/-1) matrix of shape ``(len(rows), width)``.

    Coordinate ``c`` of row ``k`` is bit ``c % 64`` of word ``c // 64``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if width == 0:
        return np.zeros((rows.size, 0))
    n_words = (width + 63) // 64
    words = hash_words(seed, STREAM_SIGN, rows, n_words)
    bits = np.unpackbits(words.astype("<u8").view(np.uint8), axis=1, bitorder="little")
    return 1.0 - 2.0 * bits[:, :width].astype(np.float64)


def random_uniform(seed: int, stream: int, rows, width: int) -> np.ndarray:
    """Uniform draws in the open interval (0, 1), 53-bit resolution."""
    words = hash_words(seed, stream, rows, width)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def random_normal(seed: int, rows, width: int) -> np.ndarray:
    """Standard normal matrix via Box-Muller over two counter streams."""
    u1 = random_uniform(seed, STREAM_GAUSS_A, rows, width)
    u2 = random_uniform(seed, STREAM_GAUSS_B, rows, width)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
