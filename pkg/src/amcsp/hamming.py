"""Hamming-space primitives: distances, binary entropy, sphere volumes, ball sampling.

Bit-strings are tuples of 0/1 ints, most significant (first) bit at index 0.
"""

from __future__ import annotations

import bisect
import itertools
import math
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.special import comb

Bits = tuple[int, ...]

INFINITE = math.inf
ENTROPY_TOLERANCE = 1e-12


def as_bits(value: str | Iterable[int]) -> Bits:
    if isinstance(value, str):
        text = value.strip()
        if any(ch not in "01" for ch in text):
            raise ValueError(f"not a bit-string: {value!r}")
        return tuple(int(ch) for ch in text)
    bits = tuple(int(b) for b in value)
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"not a bit-string: {bits!r}")
    return bits


def format_bits(bits: Iterable[int]) -> str:
    return "".join(str(int(b)) for b in bits)


def bits_to_int(bits: Sequence[int]) -> int:
    value = 0
    for bit in bits:
        value = (value << 1) | int(bit)
    return value


def int_to_bits(value: int, length: int) -> Bits:
    if value < 0 or value >> length:
        raise ValueError(f"{value} does not fit in {length} bits")
    return tuple((value >> (length - 1 - i)) & 1 for i in range(length))


def all_bit_rows(length: int) -> np.ndarray:
    """Every string of `length` bits as rows of a uint8 matrix, in lexicographic order."""
    if length == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    values = np.arange(1 << length, dtype=np.int64)
    shifts = np.arange(length - 1, -1, -1, dtype=np.int64)
    return ((values[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def rows_to_ints(rows: np.ndarray) -> np.ndarray:
    width = rows.shape[1]
    if width == 0:
        return np.zeros(rows.shape[0], dtype=np.int64)
    weights = np.left_shift(1, np.arange(width - 1, -1, -1, dtype=np.int64))
    return rows.astype(np.int64) @ weights


def hamming_distance(x: Sequence[int], y: Sequence[int]) -> int:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} != {len(y)}")
    return sum(1 for a, b in zip(x, y) if a != b)


def set_distance(x: Sequence[int], members: Iterable[Sequence[int]]) -> int | float:
    """min over the set of hamming_distance(x, s); INFINITE for the empty set."""
    best: int | float = INFINITE
    for s in members:
        d = hamming_distance(x, s)
        if d < best:
            best = d
            if d == 0:
                break
    return best


def entropy(t: Fraction | float | int) -> float:
    if not 0 <= t <= 1:
        raise ValueError(f"entropy argument must lie in [0, 1], got {t}")
    if t == 0 or t == 1:
        return 0.0
    p = float(t)
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def sphere_volume(n: int, k: int) -> int:
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"radius must lie in [0, {n}], got {k}")
    return sum(int(comb(n, i, exact=True)) for i in range(k + 1))


def entropy_volume_bound(n: int, k: int) -> int:
    """ceil(2^{H(k/n)·n}), the right side of V_{n,k} <= 2^{H(k/n)n} rounded up."""
    exponent = entropy(Fraction(k, n)) * n
    return math.ceil(2.0 ** (exponent + ENTROPY_TOLERANCE * max(1.0, exponent)))


def ball_members(length: int, radius: int) -> Iterator[Bits]:
    """All strings of weight <= radius, lexicographic order."""
    radius = min(radius, length)
    members = []
    for weight in range(radius + 1):
        for positions in itertools.combinations(range(length), weight):
            bits = [0] * length
            for p in positions:
                bits[p] = 1
            members.append(tuple(bits))
    members.sort()
    return iter(members)


def xor_bits(x: Sequence[int], y: Sequence[int]) -> Bits:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} != {len(y)}")
    return tuple(int(a) ^ int(b) for a, b in zip(x, y))


class BallSampler:
    """Exactly uniform sampler over the radius-k Hamming ball in {0,1}^length.

    Draws a weight j with probability C(length, j)/V_{length,k} using exact
    integers, then a uniform weight-j vector. One owner per instance.
    """

    def __init__(self, length: int, radius: int, seed: int) -> None:
        if length < 1:
            raise ValueError(f"length must be positive, got {length}")
        if not 0 <= radius <= length:
            raise ValueError(f"radius must lie in [0, {length}], got {radius}")
        if not 0 <= seed < 1 << 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.length = length
        self.radius = radius
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._cumulative: list[int] = []
        total = 0
        for j in range(radius + 1):
            total += int(comb(length, j, exact=True))
            self._cumulative.append(total)
        self.volume = total

    def _uniform_below(self, bound: int) -> int:
        if bound < 1 << 62:
            return int(self._rng.integers(0, bound))
        nbits = bound.bit_length()
        nbytes = (nbits + 7) // 8
        while True:
            candidate = int.from_bytes(self._rng.bytes(nbytes), "big") >> (8 * nbytes - nbits)
            if candidate < bound:
                return candidate

    def sample(self) -> Bits:
        ticket = self._uniform_below(self.volume)
        weight = bisect.bisect_right(self._cumulative, ticket)
        bits = [0] * self.length
        if weight:
            for p in self._rng.choice(self.length, size=weight, replace=False):
                bits[int(p)] = 1
        return tuple(bits)


def sample_ball(sampler: BallSampler) -> Bits:
    return sampler.sample()


def ints_to_rows(values: np.ndarray, width: int) -> np.ndarray:
    """Inverse of rows_to_ints: each integer as a row of `width` bits, MSB first."""
    values = np.asarray(values, dtype=np.int64)
    if width == 0:
        return np.zeros((values.shape[0], 0), dtype=np.uint8)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def distances_to_set(x_values: np.ndarray, members: np.ndarray) -> np.ndarray:
    """Vectorized set_distance over ints; -1 marks the empty set."""
    x_values = np.asarray(x_values, dtype=np.int64)
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        return np.full(x_values.shape, -1, dtype=np.int64)
    best = np.full(x_values.shape, np.iinfo(np.int64).max, dtype=np.int64)
    step = max(1, (1 << 20) // max(x_values.size, 1))
    for lo in range(0, members.size, step):
        pair = np.bitwise_count(x_values[:, None] ^ members[None, lo : lo + step]).astype(np.int64)
        best = np.minimum(best, pair.min(axis=1))
    return best
