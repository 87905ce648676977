"""Toy walk-plus-offset generator G_i(r_a, r_b) = K_i(r_a) XOR K'_i(r_b), the
languages it is composed with, and the search predicates built on top.

K_i(r_a) is the i-th vertex of the expander walk seeded by r_a; vertices of a
2^block_len-vertex graph read as block_len-bit strings. A seed r is r_a ‖ r_b.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuits import Circuit, CircuitBuilder, ONE, ZERO
from .errors import FormatError
from .expander import (
    ExpanderGraph,
    build_complete,
    build_margulis,
    build_random_regular,
    chernoff_bound,
    sample_walks,
    walk_from_bits,
    walk_wires,
)
from .hamming import BallSampler, Bits, bits_to_int, int_to_bits, ints_to_rows, rows_to_ints, sphere_volume

logger = logging.getLogger(__name__)

KPRIME_FAMILIES = ("zero", "rotation", "affine")
WITNESS_RELATIONS = ("claim", "certificate", "echo")
# relations with a witness for every x, certifying its true membership value
TOTAL_RELATIONS = frozenset({"claim", "echo"})
_CHUNK = 1 << 14


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    block_len: int
    k: int
    graph: ExpanderGraph
    kprime: str = "zero"

    def __post_init__(self) -> None:
        if self.block_len < 1:
            raise ValueError(f"block_len must be positive, got {self.block_len}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.graph.n_vertices != 1 << self.block_len:
            raise ValueError(f"graph has {self.graph.n_vertices} vertices, need 2^{self.block_len}")
        if self.graph.degree & (self.graph.degree - 1):
            raise ValueError(f"graph degree {self.graph.degree} is not a power of two")
        if self.kprime not in KPRIME_FAMILIES:
            raise ValueError(f"unknown K' family {self.kprime!r}; known: {KPRIME_FAMILIES}")

    @property
    def port_bits(self) -> int:
        return self.graph.degree.bit_length() - 1

    @property
    def index_bits(self) -> int:
        return math.ceil(math.log2(self.k)) if self.k > 1 else 0

    @property
    def ra_len(self) -> int:
        return self.block_len + (self.k - 1) * self.port_bits

    @property
    def rb_len(self) -> int:
        if self.kprime == "zero":
            return 0
        if self.kprime == "rotation":
            return self.block_len
        return self.block_len * (self.index_bits + 1)

    @property
    def seed_len(self) -> int:
        return self.ra_len + self.rb_len


def default_graph(block_len: int, *, seed: int = 0) -> ExpanderGraph:
    """Margulis on 2^(b/2) x 2^(b/2) for even b; random 8-regular otherwise."""
    n = 1 << block_len
    if block_len % 2 == 0 and block_len >= 2:
        return build_margulis(1 << (block_len // 2))
    if n <= 8:
        return build_complete(n, self_loops=True)
    return build_random_regular(n, 8, seed)


def make_spec(block_len: int, k: int, kprime: str = "zero", *, graph: ExpanderGraph | None = None, seed: int = 0) -> GeneratorSpec:
    return GeneratorSpec(block_len=block_len, k=k, graph=graph or default_graph(block_len, seed=seed), kprime=kprime)


# --- offsets and outputs -------------------------------------------------


def offsets_batch(spec: GeneratorSpec, rb_rows: np.ndarray) -> np.ndarray:
    """K'_i(r_b) as ints, one row of k offsets per row of r_b bits."""
    rb_rows = np.asarray(rb_rows, dtype=np.int64)
    count, b, k = rb_rows.shape[0], spec.block_len, spec.k
    if spec.kprime == "zero":
        return np.zeros((count, k), dtype=np.int64)
    if spec.kprime == "rotation":
        # offset i = r_b rotated left by i
        positions = (np.arange(b)[None, :] + np.arange(k)[:, None]) % b
        rotated = rb_rows[:, positions]
        return rows_to_ints(rotated.reshape(-1, b)).reshape(count, k)
    t = spec.index_bits
    matrix = rb_rows[:, : b * t].reshape(count, b, t)
    constant = rb_rows[:, b * t :]
    index = ints_to_rows(np.arange(k), t).astype(np.int64)
    blocks = (np.einsum("cbt,kt->ckb", matrix, index) + constant[:, None, :]) & 1
    return rows_to_ints(blocks.reshape(-1, b)).reshape(count, k)


def _split_seed(spec: GeneratorSpec, r: Sequence[int]) -> tuple[Bits, Bits]:
    if len(r) != spec.seed_len:
        raise ValueError(f"|r|={len(r)} does not match seed length {spec.seed_len}")
    bits = tuple(int(b) for b in r)
    return bits[: spec.ra_len], bits[spec.ra_len :]


def g_iw(spec: GeneratorSpec, r: Sequence[int]) -> list[Bits]:
    r_a, r_b = _split_seed(spec, r)
    walk = walk_from_bits(spec.graph, r_a).vertices
    offsets = offsets_batch(spec, np.array([r_b], dtype=np.int64).reshape(1, spec.rb_len))[0]
    return [int_to_bits(int(v) ^ int(o), spec.block_len) for v, o in zip(walk, offsets)]


def sample_outputs(spec: GeneratorSpec, count: int, rng: np.random.Generator, *, rb_rows: np.ndarray | None = None) -> np.ndarray:
    """Generator outputs for `count` uniform seeds as a (count x k) int matrix.

    A fixed r_b may be given as a single row; r_a stays uniform.
    """
    walks = sample_walks(spec.graph, spec.k, count, rng)
    if rb_rows is None:
        rb_rows = rng.integers(0, 2, size=(count, spec.rb_len))
    else:
        rb_rows = np.broadcast_to(np.asarray(rb_rows).reshape(1, spec.rb_len), (count, spec.rb_len))
    return walks ^ offsets_batch(spec, rb_rows)


# --- toy languages -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ToyLanguage:
    block_len: int
    members: np.ndarray
    description: str = "bitmap"
    witness: str | None = None

    def __post_init__(self) -> None:
        if self.members.shape != (1 << self.block_len,):
            raise ValueError(f"membership table must have 2^{self.block_len} entries, got {self.members.shape}")
        if self.witness is not None and self.witness not in WITNESS_RELATIONS:
            raise ValueError(f"unknown witness relation {self.witness!r}; known: {WITNESS_RELATIONS}")
        self.members.setflags(write=False)

    @property
    def density(self) -> Fraction:
        return Fraction(int(self.members.sum()), 1 << self.block_len)

    def contains(self, x: Sequence[int]) -> bool:
        if len(x) != self.block_len:
            raise ValueError(f"|x|={len(x)} does not match block_len {self.block_len}")
        return bool(self.members[bits_to_int(x)])

    @property
    def witness_len(self) -> int:
        if self.witness is None:
            raise ValueError("language carries no witness relation")
        return 1 + self.block_len if self.witness == "echo" else 1

    def accepts(self, x: Sequence[int], w: Sequence[int], *, total: bool = False) -> bool:
        """M(x, w), or the total relation M'(x, w) when `total`."""
        if len(w) != self.witness_len:
            raise ValueError(f"|w|={len(w)} does not match witness length {self.witness_len}")
        member = self.contains(x)
        claim = bool(w[0])
        echo_ok = self.witness != "echo" or tuple(int(b) for b in w[1:]) == tuple(int(b) for b in x)
        if total:
            if self.witness not in TOTAL_RELATIONS:
                raise ValueError(f"relation {self.witness!r} is not total")
            return claim == member and echo_ok
        return member and claim and echo_ok

    def honest_witness(self, x: Sequence[int], *, total: bool = False) -> Bits | None:
        member = self.contains(x)
        if total and self.witness not in TOTAL_RELATIONS:
            raise ValueError(f"relation {self.witness!r} is not total")
        if not total and not member:
            return None
        tail = tuple(int(b) for b in x) if self.witness == "echo" else ()
        return (int(member),) + tail


def language_from_predicate(
    block_len: int,
    predicate: str,
    *,
    seed: int = 0,
    density: Fraction | float = Fraction(1, 2),
    witness: str | None = None,
) -> ToyLanguage:
    name = predicate.upper()
    rows = ints_to_rows(np.arange(1 << block_len), block_len)
    if name == "PARITY":
        members = rows.sum(axis=1) % 2 == 1
        description = "PARITY"
    elif name == "MAJORITY":
        members = 2 * rows.sum(axis=1) > block_len
        description = "MAJORITY"
    elif name == "ALL":
        members = np.ones(1 << block_len, dtype=bool)
        description = "ALL"
    elif name == "EMPTY":
        members = np.zeros(1 << block_len, dtype=bool)
        description = "EMPTY"
    elif name == "RANDOM":
        density = Fraction(density)
        if not 0 <= density <= 1:
            raise ValueError(f"density must lie in [0, 1], got {density}")
        size = round(density * (1 << block_len))
        members = np.zeros(1 << block_len, dtype=bool)
        members[np.random.default_rng(seed).choice(1 << block_len, size=size, replace=False)] = True
        description = f"RANDOM seed={seed} density={density}"
    else:
        raise ValueError(f"unknown predicate {predicate!r}")
    return ToyLanguage(block_len=block_len, members=members, description=description, witness=witness)


def language_from_bitmap(block_len: int, hex_bitmap: str, *, witness: str | None = None) -> ToyLanguage:
    """Hex digits spell membership of x = 0, 1, ... in order; trailing pad bits are zero."""
    size = 1 << block_len
    digits = math.ceil(size / 4)
    text = hex_bitmap.strip().lower()
    if len(text) != digits or any(ch not in "0123456789abcdef" for ch in text):
        raise ValueError(f"bitmap for block_len={block_len} needs exactly {digits} hex digits")
    bits = [(int(ch, 16) >> (3 - j)) & 1 for ch in text for j in range(4)]
    if any(bits[size:]):
        raise ValueError("bitmap padding bits must be zero")
    return ToyLanguage(block_len=block_len, members=np.array(bits[:size], dtype=bool), witness=witness)


def format_language(language: ToyLanguage) -> str:
    lines = [f"language block_len={language.block_len}"]
    if language.description == "bitmap":
        bits = list(language.members.astype(int))
        bits += [0] * (-len(bits) % 4)
        hex_text = "".join(f"{bits_to_int(bits[i : i + 4]):x}" for i in range(0, len(bits), 4))
        lines.append(f"bitmap {hex_text}")
    else:
        lines.append(f"predicate {language.description}")
    if language.witness:
        lines.append(f"witness {language.witness}")
    return "\n".join(lines) + "\n"


_PREDICATE = re.compile(r"^predicate\s+(\w+)((?:\s+\w+=\S+)*)\s*$")


def parse_language(text: str, *, source: str = "") -> ToyLanguage:
    block_len: int | None = None
    body: tuple[int, str] | None = None
    witness: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if block_len is None:
            match = re.match(r"^language\s+block_len=(\d+)$", line)
            if not match:
                raise FormatError("expected header 'language block_len=<int>'", lineno=lineno, source=source)
            block_len = int(match.group(1))
        elif line.startswith(("bitmap", "predicate")) and body is None:
            body = (lineno, line)
        elif line.startswith("witness") and witness is None and body is not None:
            fields = line.split()
            if len(fields) != 2 or fields[1] not in WITNESS_RELATIONS:
                raise FormatError(f"bad witness line {line!r}", lineno=lineno, source=source)
            witness = fields[1]
        else:
            raise FormatError(f"unexpected line {line!r}", lineno=lineno, source=source)
    if block_len is None or body is None:
        raise FormatError("language needs a header and a bitmap or predicate line", source=source)
    lineno, line = body
    try:
        if line.startswith("bitmap"):
            fields = line.split()
            if len(fields) != 2:
                raise ValueError("expected 'bitmap <hex>'")
            return language_from_bitmap(block_len, fields[1], witness=witness)
        match = _PREDICATE.match(line)
        if not match:
            raise ValueError(f"bad predicate line {line!r}")
        options = dict(item.split("=", 1) for item in match.group(2).split())
        unknown = set(options) - {"seed", "density"}
        if unknown:
            raise ValueError(f"unknown predicate options {sorted(unknown)}")
        return language_from_predicate(
            block_len,
            match.group(1),
            seed=int(options.get("seed", 0)),
            density=Fraction(options.get("density", "1/2")),
            witness=witness,
        )
    except ValueError as exc:
        raise FormatError(str(exc), lineno=lineno, source=source) from None


def read_language(path: str | Path) -> ToyLanguage:
    path = Path(path)
    return parse_language(path.read_text(encoding="utf-8"), source=str(path))


# --- composition and counts ----------------------------------------------


def l_compose(language: ToyLanguage, spec: GeneratorSpec, r: Sequence[int]) -> Bits:
    if language.block_len != spec.block_len:
        raise ValueError(f"language block_len {language.block_len} != generator block_len {spec.block_len}")
    return tuple(int(language.contains(block)) for block in g_iw(spec, r))


def sharp(language: ToyLanguage, spec: GeneratorSpec, r: Sequence[int]) -> int:
    return sum(l_compose(language, spec, r))


def sharp_C(language: ToyLanguage, spec: GeneratorSpec, r: Sequence[int], witnesses: Sequence[Sequence[int]]) -> int:
    """Blocks i whose witness w_i is accepted by M at G_i(r)."""
    blocks = g_iw(spec, r)
    if len(witnesses) != spec.k:
        raise ValueError(f"{len(witnesses)} witnesses for {spec.k} blocks")
    return sum(1 for block, w in zip(blocks, witnesses) if language.accepts(block, w))


@dataclass(frozen=True, slots=True)
class ConcentrationResult:
    trials: int
    hits: int
    delta: float
    k: int
    density: Fraction
    lam: float
    # (r_b, trials, hits) for the conditional runs
    conditional: tuple[tuple[Bits, int, int], ...] = ()

    @property
    def frequency(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        return _binomial_stderr(self.hits, self.trials)

    @property
    def bound(self) -> float:
        return chernoff_bound(self.delta, self.lam, self.k)


def _binomial_stderr(hits: int, trials: int) -> float:
    if not trials:
        return 0.0
    p = hits / trials
    return math.sqrt(p * (1 - p) / trials)


def _deviation_hits(language: ToyLanguage, outputs: np.ndarray, delta: float) -> int:
    counts = language.members[outputs].sum(axis=1)
    k = outputs.shape[1]
    return int(np.count_nonzero(np.abs(counts - float(language.density) * k) >= delta * k - 1e-9))


def concentration_experiment(
    language: ToyLanguage,
    spec: GeneratorSpec,
    delta: float,
    trials: int,
    seed: int,
    *,
    conditional_samples: int = 16,
) -> ConcentrationResult:
    """Frequency of |#(r) - c k| >= delta k over uniform seeds, then per fixed r_b."""
    if trials < 0:
        raise ValueError(f"trials must be non-negative, got {trials}")
    if language.block_len != spec.block_len:
        raise ValueError(f"language block_len {language.block_len} != generator block_len {spec.block_len}")
    rng = np.random.default_rng(seed)
    hits = 0
    for lo in range(0, trials, _CHUNK):
        hits += _deviation_hits(language, sample_outputs(spec, min(_CHUNK, trials - lo), rng), delta)
    conditional = []
    if spec.rb_len and conditional_samples:
        per_sample = max(1, trials // conditional_samples)
        for _ in range(conditional_samples):
            r_b = rng.integers(0, 2, size=spec.rb_len)
            sample_hits = 0
            for lo in range(0, per_sample, _CHUNK):
                outputs = sample_outputs(spec, min(_CHUNK, per_sample - lo), rng, rb_rows=r_b)
                sample_hits += _deviation_hits(language, outputs, delta)
            conditional.append((tuple(int(b) for b in r_b), per_sample, sample_hits))
    return ConcentrationResult(
        trials=trials,
        hits=hits,
        delta=delta,
        k=spec.k,
        density=language.density,
        lam=spec.graph.lam,
        conditional=tuple(conditional),
    )


# --- search predicates ---------------------------------------------------


def _offset_wires(builder: CircuitBuilder, spec: GeneratorSpec, rb_wires: Sequence[int], i: int) -> list[int]:
    b = spec.block_len
    if spec.kprime == "zero":
        return [ZERO] * b
    if spec.kprime == "rotation":
        return [rb_wires[(j + i) % b] for j in range(b)]
    t = spec.index_bits
    index = int_to_bits(i, t) if t else ()
    return [
        builder.parity([rb_wires[b * t + j]] + [rb_wires[j * t + s] for s in range(t) if index[s]])
        for j in range(b)
    ]


def _relation_wire(builder: CircuitBuilder, language: ToyLanguage, x: Sequence[int], w: Sequence[int], *, total: bool) -> int:
    member = builder.lookup(x, [int(m) for m in language.members])
    claim = w[0]
    pieces = []
    if language.witness == "echo":
        pieces.append(builder.all_of(builder.eq(a, b) for a, b in zip(w[1:], x, strict=True)))
    if total:
        pieces.append(builder.eq(claim, member))
    else:
        pieces.extend([member, claim])
    return builder.all_of(pieces)


def _block_acceptances(language: ToyLanguage, spec: GeneratorSpec, *, total: bool) -> tuple[CircuitBuilder, list[int]]:
    if language.witness is None:
        raise ValueError("language carries no witness relation")
    if total and language.witness not in TOTAL_RELATIONS:
        raise ValueError(f"relation {language.witness!r} is not total; the coNP predicate needs one")
    if language.block_len != spec.block_len:
        raise ValueError(f"language block_len {language.block_len} != generator block_len {spec.block_len}")
    t = language.witness_len
    builder = CircuitBuilder(spec.seed_len, spec.k * t)
    r = builder.r_wires
    walk = walk_wires(builder, spec.graph, r[: spec.ra_len], spec.k)
    acceptances = []
    for i, vertex in enumerate(walk):
        offset = _offset_wires(builder, spec, r[spec.ra_len :], i)
        block = [builder.xor(a, b) for a, b in zip(vertex, offset)]
        w_i = builder.w_wires[i * t : (i + 1) * t]
        acceptances.append(_relation_wire(builder, language, block, w_i, total=total))
    return builder, acceptances


def build_Q_conp(language: ToyLanguage, spec: GeneratorSpec) -> Circuit:
    """Q(r, w_1..w_k) = AND_i M'(G_i(r), w_i)."""
    builder, acceptances = _block_acceptances(language, spec, total=True)
    q = builder.build(builder.all_of(acceptances), name=f"Qconp[{language.description}]")
    logger.debug("coNP predicate: %d inputs, %d gates", q.n_inputs, q.size)
    return q


def build_Q_threshold(language: ToyLanguage, spec: GeneratorSpec, threshold_eta: Fraction | float) -> Circuit:
    """Q(r, w_1..w_k) = [at least ceil(eta k) blocks have M(G_i(r), w_i) = 1]."""
    threshold_eta = Fraction(threshold_eta)
    if not 0 < threshold_eta < 1:
        raise ValueError(f"threshold_eta must lie in (0, 1), got {threshold_eta}")
    builder, acceptances = _block_acceptances(language, spec, total=False)
    needed = math.ceil(threshold_eta * spec.k)
    q = builder.build(builder.at_least(acceptances, needed), name=f"Qthr[{language.description},{threshold_eta}]")
    logger.debug("threshold predicate: need %d of %d, %d gates", needed, spec.k, q.size)
    return q


def honest_witnesses(language: ToyLanguage, spec: GeneratorSpec, r: Sequence[int], *, total: bool) -> list[Bits | None]:
    return [language.honest_witness(block, total=total) for block in g_iw(spec, r)]


def claim_bits_extract(q_input: Sequence[int], *, seed_len: int, k: int, witness_len: int) -> Bits:
    """First bit of each witness block of a Q input (r, w_1..w_k)."""
    if len(q_input) != seed_len + k * witness_len:
        raise ValueError(f"Q input of length {len(q_input)} does not split as {seed_len} + {k}x{witness_len}")
    return tuple(int(q_input[seed_len + i * witness_len]) for i in range(k))


# --- subset guessing -----------------------------------------------------


def _guess_radius(k: int, alpha: Fraction | float) -> int:
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    # |J| < alpha*k
    return min(math.ceil(Fraction(alpha) * k) - 1, k)


def _check_indices(indices: Sequence[int], k: int) -> frozenset[int]:
    chosen = frozenset(int(i) for i in indices)
    if any(not 0 <= i < k for i in chosen):
        raise ValueError(f"indices must lie in [0, {k})")
    return chosen


class SubsetGuesser:
    """Characteristic vectors of I ∪ J, J uniform among subsets of [k] with |J| < alpha k.

    J ranges over all of [k], so it may overlap I.
    """

    def __init__(self, accepted: Sequence[int], k: int, alpha: Fraction | float, seed: int) -> None:
        self.k = k
        self.radius = _guess_radius(k, alpha)
        self.accepted = _check_indices(accepted, k)
        self._sampler = BallSampler(k, self.radius, seed)

    @property
    def admissible(self) -> int:
        """Number of admissible J, V_{k, radius}."""
        return self._sampler.volume

    def hits(self, target: Sequence[int]) -> int:
        """Number of admissible J with I ∪ J equal to the target set."""
        goal = _check_indices(target, self.k)
        if not self.accepted <= goal:
            return 0
        # J = (target \ I) plus any subset S of I, with |J| <= radius
        budget = self.radius - len(goal - self.accepted)
        if budget < 0:
            return 0
        if not self.accepted:
            return 1
        return sphere_volume(len(self.accepted), min(budget, len(self.accepted)))

    def guess(self) -> Bits:
        return tuple(int(i in self.accepted or bit) for i, bit in enumerate(self._sampler.sample()))


def guess_with_subset(accepted: Sequence[int], k: int, alpha: Fraction | float, seed: int) -> Bits:
    return SubsetGuesser(accepted, k, alpha, seed).guess()


@dataclass(frozen=True, slots=True)
class GuessResult:
    trials: int
    successes: int
    exact: Fraction
    floor: Fraction

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        return _binomial_stderr(self.successes, self.trials)


def subset_guess_experiment(
    accepted: Sequence[int],
    target: Sequence[int],
    k: int,
    alpha: Fraction | float,
    trials: int,
    seed: int,
) -> GuessResult:
    """Success rate of hitting the target set exactly, with its exact value and
    the 1/V_{k, floor(alpha k)} floor."""
    guesser = SubsetGuesser(accepted, k, alpha, seed)
    goal = _check_indices(target, k)
    target_bits = tuple(1 if i in goal else 0 for i in range(k))
    exact = Fraction(guesser.hits(target), guesser.admissible)
    floor = Fraction(1, sphere_volume(k, min(k, math.floor(Fraction(alpha) * k))))
    successes = sum(1 for _ in range(trials) if guesser.guess() == target_bits)
    return GuessResult(trials=trials, successes=successes, exact=exact, floor=floor)
