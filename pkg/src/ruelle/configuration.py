"""Eventually constant points of M^N, the shift, the product metric, and words."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from ruelle.state_space import StateSpace

DEFAULT_ENUMERATION_CAP = 10**7


class EnumerationCapError(ValueError):
    """Raised when exhaustive enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class Configuration:
    """The point (x_1, ..., x_m, pad, pad, ...) of M^N, stored by point index."""

    space: StateSpace
    prefix: tuple = ()
    pad: int = 0

    def __post_init__(self):
        prefix = tuple(int(i) for i in self.prefix)
        object.__setattr__(self, "prefix", prefix)
        n = self.space.size
        if not 0 <= self.pad < n:
            raise ValueError(f"pad index {self.pad} outside alphabet of size {n}")
        bad = [i for i in prefix if not 0 <= i < n]
        if bad:
            raise ValueError(f"prefix indices {bad} outside alphabet of size {n}")

    def __len__(self) -> int:
        return len(self.prefix)

    def coordinate(self, k: int) -> int:
        """Index of the k-th coordinate, 1-based."""
        if k < 1:
            raise ValueError("coordinates are 1-based")
        return self.prefix[k - 1] if k <= len(self.prefix) else self.pad

    def head(self, k: int) -> tuple:
        """First k coordinates, pad-filled."""
        return tuple(self.coordinate(j) for j in range(1, k + 1))

    def words(self, length: int | None = None) -> np.ndarray:
        """This configuration as a ``(1, L)`` index array."""
        length = len(self.prefix) if length is None else length
        return np.array([self.head(length)], dtype=np.int64).reshape(1, length)

    def with_tail(self, depth: int, tail: "Configuration") -> "Configuration":
        """Keep coordinates 1..depth and continue with ``tail``."""
        return Configuration(self.space, self.head(depth) + tail.prefix, tail.pad)


def pure_pad(space: StateSpace, pad: int = 0) -> Configuration:
    return Configuration(space, (), pad)


def shift(x: Configuration, times: int = 1) -> Configuration:
    return Configuration(x.space, x.prefix[times:], x.pad)


def prepend(a: int, x: Configuration) -> Configuration:
    if not 0 <= int(a) < x.space.size:
        raise ValueError(f"point index {a} outside alphabet of size {x.space.size}")
    return Configuration(x.space, (int(a),) + x.prefix, x.pad)


class Distance(NamedTuple):
    value: float
    tail_bound: float


def product_distance(x: Configuration, y: Configuration, depth: int | None = None) -> Distance:
    """sum_{n<=depth} 2^-n d(x_n, y_n), with a bound on the neglected tail.

    The bound is zero when both points are already constant beyond ``depth``.
    """
    if not x.space.same_as(y.space):
        raise ValueError("configurations live on different state spaces")
    longest = max(len(x), len(y))
    depth = longest if depth is None else depth
    if depth < longest:
        raise ValueError(f"depth {depth} shorter than prefix length {longest}")
    d = x.space.distance
    value = sum(2.0**-k * d[x.coordinate(k), y.coordinate(k)] for k in range(1, depth + 1))
    # Beyond depth both points are constant: the tail is an exact geometric series.
    tail = 2.0**-depth * d[x.pad, y.pad]
    return Distance(float(value + tail), 0.0)


def _check_cap(size: int, n: int, cap: int) -> int:
    total = size**n
    if total > cap:
        raise EnumerationCapError(
            f"{size}^{n} = {total} words exceeds the enumeration cap {cap}; use a sampling mode"
        )
    return total


def enumerate_words(space: StateSpace, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[tuple]:
    """All words of length n in lexicographic index order."""
    _check_cap(space.size, n, cap)
    return itertools.product(range(space.size), repeat=n)


def word_array(size: int, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """All ``size**n`` words as rows of an index array, lexicographic."""
    total = _check_cap(size, n, cap)
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    idx = np.arange(total, dtype=np.int64)
    powers = size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % size


def word_blocks(size: int, n: int, block: int = 1 << 17, cap: int = DEFAULT_ENUMERATION_CAP) -> Iterator[np.ndarray]:
    """Lexicographic words in contiguous blocks, to bound memory."""
    total = _check_cap(size, n, cap)
    if n == 0:
        yield np.zeros((1, 0), dtype=np.int64)
        return
    powers = size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % size


def word_index(words: np.ndarray, size: int) -> np.ndarray:
    """Lexicographic rank of each row."""
    n = words.shape[1]
    if n == 0:
        return np.zeros(words.shape[0], dtype=np.int64)
    powers = size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return words @ powers


def pad_to(words: np.ndarray, pad: int, length: int) -> np.ndarray:
    """First ``length`` columns of ``words``, pad-filled when shorter."""
    k, width = words.shape
    if width >= length:
        return words[:, :length]
    out = np.full((k, length), pad, dtype=np.int64)
    out[:, :width] = words
    return out
