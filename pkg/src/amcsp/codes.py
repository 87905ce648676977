"""Binary error-correcting codes with bounded-distance decoders.

The default backend is a systematic Reed-Solomon code over GF(2^8) with
symbols serialized MSB-first to 8 bits and Berlekamp-Welch decoding. Every
backend here is GF(2)-linear, so `generator_matrix` describes it completely.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Protocol, Sequence

import galois
import numpy as np

from .hamming import Bits, all_bit_rows

GF_PRIMITIVE = 0x11D
SYMBOL_BITS = 8
RS_RATE_INVERSE = 3
# N' <= C_CODE * N for the default backend.
C_CODE = SYMBOL_BITS * RS_RATE_INVERSE
MAX_RS_LENGTH = 255
REPETITION_FACTOR = 5


class _Fail:
    _instance: "_Fail | None" = None

    def __new__(cls) -> "_Fail":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "FAIL"

    def __bool__(self) -> bool:
        return False


FAIL = _Fail()


@dataclass(frozen=True, slots=True)
class CodeSpec:
    backend: str
    n: int
    n_prime: int
    eta: Fraction
    min_distance: int
    systematic: bool = True
    # rs: (k_symbols, n_symbols); repetition: (factor,); identity: ()
    params: tuple[int, ...] = ()

    @property
    def id(self) -> str:
        return f"{self.backend}:{self.n}:{self.n_prime}"

    @property
    def radius(self) -> int:
        """floor(eta * N'), the number of bit errors always corrected."""
        return int(self.eta * self.n_prime)

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError(f"message length must be positive, got {self.n}")
        if self.n_prime < self.n:
            raise ValueError(f"codeword length {self.n_prime} is shorter than message length {self.n}")
        if not 0 <= self.eta < 1:
            raise ValueError(f"eta must lie in [0, 1), got {self.eta}")
        if self.min_distance <= 2 * self.eta * self.n_prime:
            raise ValueError(
                f"min_distance {self.min_distance} must exceed 2*eta*N' = {2 * self.eta * self.n_prime}"
            )


# --- GF(2^8) -------------------------------------------------------------

# Integer representation: symbol value v <-> the field element with poly bits v.
GF = galois.GF(2**SYMBOL_BITS, irreducible_poly=GF_PRIMITIVE)


# --- backends ------------------------------------------------------------


class CodeBackend(Protocol):
    def build(self, n: int) -> CodeSpec: ...

    def encode(self, spec: CodeSpec, w: Bits) -> Bits: ...

    def decode(self, spec: CodeSpec, u: Bits) -> Bits | _Fail: ...


@functools.lru_cache(maxsize=64)
def _rs_parity_matrix(k: int, n: int) -> galois.FieldArray:
    """Row i holds L_j(x_{k+i}) for the Lagrange basis over message points 0..k-1."""
    message_points = GF(np.arange(k))
    parity_points = GF(np.arange(k, n))
    matrix = np.zeros((n - k, k), dtype=np.int64)
    for j, unit in enumerate(np.eye(k, dtype=np.int64)):
        basis = galois.lagrange_poly(message_points, GF(unit))
        matrix[:, j] = basis(parity_points).view(np.ndarray)
    return GF(matrix)


def _solve_consistent(augmented: galois.FieldArray) -> np.ndarray | None:
    """One solution of [A | b] with free variables set to 0, or None if inconsistent."""
    n_cols = augmented.shape[1] - 1
    reduced = augmented.row_reduce(ncols=n_cols).view(np.ndarray)
    solution = np.zeros(n_cols, dtype=np.int64)
    for row in reduced:
        pivots = np.flatnonzero(row[:n_cols])
        if pivots.size == 0:
            if row[-1]:
                return None
            continue
        solution[pivots[0]] = row[-1]
    return solution


def _bits_to_symbols(bits: Sequence[int], count: int) -> list[int]:
    padded = list(bits) + [0] * (count * SYMBOL_BITS - len(bits))
    symbols = []
    for s in range(count):
        value = 0
        for b in padded[s * SYMBOL_BITS : (s + 1) * SYMBOL_BITS]:
            value = (value << 1) | int(b)
        symbols.append(value)
    return symbols


def _symbols_to_bits(symbols: Sequence[int]) -> list[int]:
    bits: list[int] = []
    for value in symbols:
        bits.extend((value >> (SYMBOL_BITS - 1 - i)) & 1 for i in range(SYMBOL_BITS))
    return bits


class ReedSolomonBackend:
    """Systematic RS(n=3k, k) over GF(2^8); message symbols sit at points 0..k-1."""

    def build(self, n: int) -> CodeSpec:
        if n < 1:
            raise ValueError(f"message length must be positive, got {n}")
        k = -(-n // SYMBOL_BITS)
        length = RS_RATE_INVERSE * k
        if length > MAX_RS_LENGTH:
            raise ValueError(f"message of {n} bits needs {length} RS symbols; the field allows {MAX_RS_LENGTH}")
        errors = (length - k) // 2
        return CodeSpec(
            backend="rs",
            n=n,
            n_prime=SYMBOL_BITS * length,
            eta=Fraction(errors, SYMBOL_BITS * length),
            min_distance=length - k + 1,
            systematic=True,
            params=(k, length),
        )

    def encode(self, spec: CodeSpec, w: Bits) -> Bits:
        k, length = spec.params
        message = _bits_to_symbols(w, k)
        parity = (_rs_parity_matrix(k, length) @ GF(message)).tolist()
        return tuple(_symbols_to_bits(message + parity))

    def decode(self, spec: CodeSpec, u: Bits) -> Bits | _Fail:
        k, length = spec.params
        received = _bits_to_symbols(u, length)
        errors = (length - k) // 2
        f = self._berlekamp_welch(received, k, errors)
        if f is None:
            return FAIL
        bits = _symbols_to_bits(f(GF(np.arange(k))).tolist())
        # Nonzero padding means the nearest RS codeword lies outside image(E).
        if any(bits[spec.n :]):
            return FAIL
        return tuple(bits[: spec.n])

    @staticmethod
    def _berlekamp_welch(received: list[int], k: int, errors: int) -> galois.Poly | None:
        """Q(x) = y E(x) at every point with E monic of degree `errors`; f = Q / E."""
        n = len(received)
        q_terms = errors + k
        xs = GF(np.arange(n))
        ys = GF(received)
        powers = [GF.Ones(n)]
        for _ in range(q_terms):
            powers.append(powers[-1] * xs)
        augmented = np.zeros((n, q_terms + errors + 1), dtype=np.int64)
        for t in range(q_terms):
            augmented[:, t] = powers[t].view(np.ndarray)
        for t in range(errors):
            augmented[:, q_terms + t] = (ys * powers[t]).view(np.ndarray)
        augmented[:, -1] = (ys * powers[errors]).view(np.ndarray)
        solution = _solve_consistent(GF(augmented))
        if solution is None:
            return None
        q_poly = galois.Poly(solution[:q_terms], field=GF, order="asc")
        e_poly = galois.Poly(np.append(solution[q_terms:], 1), field=GF, order="asc")
        f, remainder = divmod(q_poly, e_poly)
        if np.count_nonzero(remainder.coeffs) or f.degree >= k:
            return None
        if np.count_nonzero(f(xs) != ys) > errors:
            return None
        return f


class RepetitionBackend:
    """w repeated REPETITION_FACTOR times; position-wise majority decoding."""

    def build(self, n: int) -> CodeSpec:
        if n < 1:
            raise ValueError(f"message length must be positive, got {n}")
        correctable = (REPETITION_FACTOR - 1) // 2
        return CodeSpec(
            backend="repetition",
            n=n,
            n_prime=REPETITION_FACTOR * n,
            eta=Fraction(correctable, REPETITION_FACTOR * n),
            min_distance=REPETITION_FACTOR,
            systematic=True,
            params=(REPETITION_FACTOR,),
        )

    def encode(self, spec: CodeSpec, w: Bits) -> Bits:
        return tuple(w) * spec.params[0]

    def decode(self, spec: CodeSpec, u: Bits) -> Bits | _Fail:
        factor = spec.params[0]
        copies = [u[i * spec.n : (i + 1) * spec.n] for i in range(factor)]
        return tuple(int(2 * sum(column) > factor) for column in zip(*copies))


class IdentityBackend:
    """E(w) = w. Corrects nothing; used for exhaustive checks at tiny sizes."""

    def build(self, n: int) -> CodeSpec:
        if n < 1:
            raise ValueError(f"message length must be positive, got {n}")
        return CodeSpec(backend="identity", n=n, n_prime=n, eta=Fraction(0), min_distance=1)

    def encode(self, spec: CodeSpec, w: Bits) -> Bits:
        return tuple(w)

    def decode(self, spec: CodeSpec, u: Bits) -> Bits | _Fail:
        return tuple(u)


CODE_BACKENDS: dict[str, CodeBackend] = {
    "rs": ReedSolomonBackend(),
    "repetition": RepetitionBackend(),
    "identity": IdentityBackend(),
}


def _backend(spec_or_id: CodeSpec | str) -> CodeBackend:
    key = spec_or_id.backend if isinstance(spec_or_id, CodeSpec) else spec_or_id
    try:
        return CODE_BACKENDS[key]
    except KeyError:
        raise ValueError(f"unknown code backend {key!r}; known: {sorted(CODE_BACKENDS)}") from None


def build_code(backend: str, n: int) -> CodeSpec:
    spec = _backend(backend).build(n)
    spec.validate()
    return spec


def build_default_code(n: int) -> CodeSpec:
    return build_code("rs", n)


def encode(spec: CodeSpec, w: Sequence[int]) -> Bits:
    if len(w) != spec.n:
        raise ValueError(f"message length {len(w)} != N = {spec.n}")
    return _backend(spec).encode(spec, tuple(int(b) for b in w))


def decode(spec: CodeSpec, u: Sequence[int]) -> Bits | _Fail:
    if len(u) != spec.n_prime:
        raise ValueError(f"word length {len(u)} != N' = {spec.n_prime}")
    return _backend(spec).decode(spec, tuple(int(b) for b in u))


@functools.lru_cache(maxsize=32)
def generator_matrix(spec: CodeSpec) -> np.ndarray:
    """GF(2) generator G (N x N') with encode(w) = w @ G mod 2."""
    rows = []
    for j in range(spec.n):
        unit = [0] * spec.n
        unit[j] = 1
        rows.append(encode(spec, unit))
    matrix = np.array(rows, dtype=np.uint8)
    matrix.setflags(write=False)
    return matrix


def encode_batch(spec: CodeSpec, messages: np.ndarray) -> np.ndarray:
    """Encode each row of a (rows x N) 0/1 array."""
    g = generator_matrix(spec).astype(np.int64)
    return ((messages.astype(np.int64) @ g) & 1).astype(np.uint8)


def certify_min_distance(spec: CodeSpec, *, exhaustive_limit: int = 10) -> int:
    """Exact minimum distance (minimum nonzero codeword weight) for N up to the
    limit; the backend's design value beyond it."""
    if spec.n > exhaustive_limit:
        return spec.min_distance
    codewords = encode_batch(spec, all_bit_rows(spec.n)[1:])
    return int(codewords.sum(axis=1).min())
