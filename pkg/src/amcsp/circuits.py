"""Fan-in-two Boolean circuits with an (r, w) input partition.

Wire numbering: inputs first (r_1..r_l are 0..l-1, then w_1..w_N), then one
wire per gate in order. ZERO and ONE are the constant operands.
"""

from __future__ import annotations

import functools
import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .codes import CodeSpec, generator_matrix
from .errors import FormatError, LimitExceededError
from .hamming import Bits, all_bit_rows, bits_to_int, int_to_bits, ints_to_rows
from .parallel import shard_map, split_range

logger = logging.getLogger(__name__)

ZERO = -1
ONE = -2

OP_ARITY = {"AND": 2, "OR": 2, "XOR": 2, "NOT": 1, "CONST0": 0, "CONST1": 0}

DEFAULT_LIMIT_ARTHUR = 20
DEFAULT_LIMIT_WITNESS = 24
CHUNK_ROWS = 1 << 16
# |Q| <= |C| + Q_SIZE_PER_BLOCK_BIT * b*l + N' * (N + Q_SIZE_PER_PARITY) + 2
Q_SIZE_PER_BLOCK_BIT = 3
Q_SIZE_PER_PARITY = 2


@dataclass(frozen=True, slots=True)
class Gate:
    op: str
    args: tuple[int, ...] = ()


@dataclass(frozen=True)
class Circuit:
    n_r: int
    n_w: int
    gates: tuple[Gate, ...]
    output: int
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.n_r < 0 or self.n_w < 0:
            raise ValueError(f"input block lengths must be non-negative, got l={self.n_r} N={self.n_w}")
        wires = self.n_inputs
        for index, gate in enumerate(self.gates):
            arity = OP_ARITY.get(gate.op)
            if arity is None:
                raise ValueError(f"gate {index + 1}: unknown operation {gate.op!r}")
            if len(gate.args) != arity:
                raise ValueError(f"gate {index + 1}: {gate.op} takes {arity} operands, got {len(gate.args)}")
            for arg in gate.args:
                if arg not in (ZERO, ONE) and not 0 <= arg < wires:
                    raise ValueError(f"gate {index + 1}: operand {arg} is not an input or earlier gate")
            wires += 1
        if not 0 <= self.output < wires:
            raise ValueError(f"output wire {self.output} does not exist")

    @property
    def n_inputs(self) -> int:
        return self.n_r + self.n_w

    @property
    def size(self) -> int:
        return len(self.gates)

    @functools.cached_property
    def id(self) -> str:
        return hashlib.sha256(format_circuit(self).encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True, slots=True)
class SatProfile:
    circuit_id: str
    n_r: int
    witnesses: Mapping[Bits, Bits]

    @property
    def sat_r_set(self) -> frozenset[Bits]:
        return frozenset(self.witnesses)

    def __len__(self) -> int:
        return len(self.witnesses)


# --- evaluation ----------------------------------------------------------


def _apply(op: str, a, b):
    if op == "AND":
        return a & b
    if op == "OR":
        return a | b
    if op == "XOR":
        return a ^ b
    if op == "NOT":
        return ~a if isinstance(a, np.ndarray) else 1 - a
    raise AssertionError(op)


def eval_circuit(c: Circuit, r: Sequence[int], w: Sequence[int]) -> int:
    if len(r) != c.n_r:
        raise ValueError(f"|r|={len(r)} does not match l={c.n_r}")
    if len(w) != c.n_w:
        raise ValueError(f"|w|={len(w)} does not match N={c.n_w}")
    wires = [int(b) for b in r] + [int(b) for b in w]

    def ref(i: int) -> int:
        return 0 if i == ZERO else 1 if i == ONE else wires[i]

    for gate in c.gates:
        if gate.op == "CONST0":
            wires.append(0)
        elif gate.op == "CONST1":
            wires.append(1)
        elif gate.op == "NOT":
            wires.append(1 - ref(gate.args[0]))
        else:
            wires.append(_apply(gate.op, ref(gate.args[0]), ref(gate.args[1])))
    return wires[c.output]


def eval_batch(c: Circuit, rows: np.ndarray) -> np.ndarray:
    """Evaluate on every row of a (m x (l+N)) 0/1 matrix; returns a bool vector."""
    rows = np.asarray(rows, dtype=bool)
    if rows.ndim != 2 or rows.shape[1] != c.n_inputs:
        raise ValueError(f"expected rows of width {c.n_inputs}, got shape {rows.shape}")
    m = rows.shape[0]
    zero = np.zeros(m, dtype=bool)
    one = np.ones(m, dtype=bool)
    wires: list[np.ndarray] = [rows[:, i] for i in range(c.n_inputs)]

    def ref(i: int) -> np.ndarray:
        return zero if i == ZERO else one if i == ONE else wires[i]

    for gate in c.gates:
        if gate.op == "CONST0":
            wires.append(zero)
        elif gate.op == "CONST1":
            wires.append(one)
        elif gate.op == "NOT":
            wires.append(~ref(gate.args[0]))
        else:
            wires.append(_apply(gate.op, ref(gate.args[0]), ref(gate.args[1])))
    return np.array(wires[c.output], dtype=bool, copy=True)


def truth_table(c: Circuit, *, limit: int = DEFAULT_LIMIT_WITNESS) -> np.ndarray:
    """Output on every input in lexicographic order of (r, w)."""
    if c.n_inputs > limit:
        raise LimitExceededError("l+N", c.n_inputs, limit)
    return np.concatenate(
        [eval_batch(c, ints_to_rows(np.arange(lo, hi), c.n_inputs)) for lo, hi in split_range(1 << c.n_inputs, CHUNK_ROWS)]
    )


# --- witness search ------------------------------------------------------


def _scan_witness(c: Circuit, r_row: np.ndarray) -> int | None:
    for lo, hi in split_range(1 << c.n_w, CHUNK_ROWS):
        w_rows = ints_to_rows(np.arange(lo, hi), c.n_w)
        rows = np.concatenate([np.broadcast_to(r_row, (hi - lo, c.n_r)), w_rows], axis=1)
        hits = np.flatnonzero(eval_batch(c, rows))
        if hits.size:
            return lo + int(hits[0])
    return None


def _first_witnesses(c: Circuit, r_values: Sequence[int]) -> list[int | None]:
    """Lexicographically first accepting w (as an int) for each r (as an int)."""
    width = 1 << c.n_w
    found: list[int | None] = []
    if width > CHUNK_ROWS:
        for r in r_values:
            found.append(_scan_witness(c, ints_to_rows(np.array([r]), c.n_r)[0]))
        return found
    w_rows = all_bit_rows(c.n_w)
    per_chunk = max(1, CHUNK_ROWS // width)
    for lo in range(0, len(r_values), per_chunk):
        block = np.asarray(r_values[lo : lo + per_chunk], dtype=np.int64)
        r_rows = ints_to_rows(block, c.n_r)
        rows = np.concatenate([np.repeat(r_rows, width, axis=0), np.tile(w_rows, (len(block), 1))], axis=1)
        accepted = eval_batch(c, rows).reshape(len(block), width)
        firsts = accepted.argmax(axis=1)
        for hit, first in zip(accepted.any(axis=1), firsts):
            found.append(int(first) if hit else None)
    return found


def find_witness(c: Circuit, r: Sequence[int], *, limit_witness: int = DEFAULT_LIMIT_WITNESS) -> Bits | None:
    if len(r) != c.n_r:
        raise ValueError(f"|r|={len(r)} does not match l={c.n_r}")
    if c.n_w > limit_witness:
        raise LimitExceededError("N", c.n_w, limit_witness)
    first = _first_witnesses(c, [bits_to_int(r)])[0]
    return None if first is None else int_to_bits(first, c.n_w)


def witness_exists_batch(c: Circuit, r_values: Sequence[int], *, limit_witness: int = DEFAULT_LIMIT_WITNESS) -> np.ndarray:
    """Bool vector: does each challenge (as an int) admit an accepting w."""
    if c.n_w > limit_witness:
        raise LimitExceededError("N", c.n_w, limit_witness)
    return np.array([w is not None for w in _first_witnesses(c, list(r_values))], dtype=bool)


def _profile_shard(task: tuple[Circuit, int, int]) -> list[tuple[int, int]]:
    c, lo, hi = task
    found = _first_witnesses(c, range(lo, hi))
    return [(lo + offset, w) for offset, w in enumerate(found) if w is not None]


def sat_profile(
    c: Circuit,
    *,
    limit_arthur: int = DEFAULT_LIMIT_ARTHUR,
    limit_witness: int = DEFAULT_LIMIT_WITNESS,
    workers: int = 1,
) -> SatProfile:
    if c.n_r > limit_arthur:
        raise LimitExceededError("l", c.n_r, limit_arthur)
    if c.n_w > limit_witness:
        raise LimitExceededError("N", c.n_w, limit_witness)
    shards = [(c, lo, hi) for lo, hi in split_range(1 << c.n_r, 1 << 12)]
    witnesses: dict[Bits, Bits] = {}
    for part in shard_map(_profile_shard, shards, workers):
        for r, w in part:
            witnesses[int_to_bits(r, c.n_r)] = int_to_bits(w, c.n_w)
    logger.debug("sat_profile %s: %d of %d challenges satisfiable", c.id, len(witnesses), 1 << c.n_r)
    return SatProfile(circuit_id=c.id, n_r=c.n_r, witnesses=witnesses)


def satisfying_inputs(c: Circuit, *, limit: int = DEFAULT_LIMIT_WITNESS) -> np.ndarray:
    """Every accepting input (r, w) as an int over l+N bits, ascending."""
    if c.n_inputs > limit:
        raise LimitExceededError("l+N", c.n_inputs, limit)
    parts = []
    for lo, hi in split_range(1 << c.n_inputs, CHUNK_ROWS):
        accepted = eval_batch(c, ints_to_rows(np.arange(lo, hi), c.n_inputs))
        parts.append(lo + np.flatnonzero(accepted))
    return np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, dtype=np.int64)


def satisfying_pairs(c: Circuit, *, limit: int = DEFAULT_LIMIT_WITNESS) -> list[tuple[Bits, Bits]]:
    pairs = []
    for value in satisfying_inputs(c, limit=limit):
        bits = int_to_bits(int(value), c.n_inputs)
        pairs.append((bits[: c.n_r], bits[c.n_r :]))
    return pairs


def random_circuit(
    n_r: int,
    n_w: int,
    n_gates: int,
    rng: np.random.Generator,
    *,
    ops: Sequence[str] = ("AND", "OR", "XOR", "NOT"),
) -> Circuit:
    if n_r + n_w < 1:
        raise ValueError("a random circuit needs at least one input")
    if n_gates < 1:
        raise ValueError(f"n_gates must be positive, got {n_gates}")
    gates = []
    for index in range(n_gates):
        wires = n_r + n_w + index
        op = str(ops[int(rng.integers(len(ops)))])
        args = tuple(int(rng.integers(wires)) for _ in range(OP_ARITY[op]))
        gates.append(Gate(op, args))
    return Circuit(n_r=n_r, n_w=n_w, gates=tuple(gates), output=n_r + n_w + n_gates - 1)


# --- construction --------------------------------------------------------


class CircuitBuilder:
    """Gate emitter with constant folding and structural hashing.

    Methods take and return wire ids; ZERO and ONE fold away and never reach
    an emitted gate.
    """

    _COMMUTATIVE = frozenset({"AND", "OR", "XOR"})

    def __init__(self, n_r: int, n_w: int) -> None:
        self.n_r = n_r
        self.n_w = n_w
        self._gates: list[Gate] = []
        self._index: dict[tuple[str, tuple[int, ...]], int] = {}

    def r(self, i: int) -> int:
        if not 0 <= i < self.n_r:
            raise IndexError(f"r index {i} out of range")
        return i

    def w(self, i: int) -> int:
        if not 0 <= i < self.n_w:
            raise IndexError(f"w index {i} out of range")
        return self.n_r + i

    @property
    def r_wires(self) -> list[int]:
        return list(range(self.n_r))

    @property
    def w_wires(self) -> list[int]:
        return list(range(self.n_r, self.n_r + self.n_w))

    @staticmethod
    def const(bit: int) -> int:
        return ONE if bit else ZERO

    def _emit(self, op: str, args: tuple[int, ...]) -> int:
        if op in self._COMMUTATIVE:
            args = tuple(sorted(args))
        key = (op, args)
        wire = self._index.get(key)
        if wire is None:
            wire = self.n_r + self.n_w + len(self._gates)
            self._gates.append(Gate(op, args))
            self._index[key] = wire
        return wire

    def not_(self, a: int) -> int:
        if a == ZERO:
            return ONE
        if a == ONE:
            return ZERO
        return self._emit("NOT", (a,))

    def and_(self, a: int, b: int) -> int:
        if ZERO in (a, b):
            return ZERO
        if a == ONE:
            return b
        if b == ONE or a == b:
            return a
        return self._emit("AND", (a, b))

    def or_(self, a: int, b: int) -> int:
        if ONE in (a, b):
            return ONE
        if a == ZERO:
            return b
        if b == ZERO or a == b:
            return a
        return self._emit("OR", (a, b))

    def xor(self, a: int, b: int) -> int:
        if a == b:
            return ZERO
        if a == ZERO:
            return b
        if b == ZERO:
            return a
        if a == ONE:
            return self.not_(b)
        if b == ONE:
            return self.not_(a)
        return self._emit("XOR", (a, b))

    def eq(self, a: int, b: int) -> int:
        return self.not_(self.xor(a, b))

    def mux(self, select: int, if0: int, if1: int) -> int:
        if select == ZERO or if0 == if1:
            return if0
        if select == ONE:
            return if1
        if (if0, if1) == (ZERO, ONE):
            return select
        if (if0, if1) == (ONE, ZERO):
            return self.not_(select)
        return self.xor(if0, self.and_(select, self.xor(if0, if1)))

    def all_of(self, wires: Iterable[int]) -> int:
        acc = ONE
        for wire in wires:
            acc = self.and_(acc, wire)
        return acc

    def any_of(self, wires: Iterable[int]) -> int:
        acc = ZERO
        for wire in wires:
            acc = self.or_(acc, wire)
        return acc

    def parity(self, wires: Iterable[int]) -> int:
        acc = ZERO
        for wire in wires:
            acc = self.xor(acc, wire)
        return acc

    def equals_bits(self, wires: Sequence[int], bits: Sequence[int]) -> int:
        return self.all_of(wire if bit else self.not_(wire) for wire, bit in zip(wires, bits, strict=True))

    def lookup(self, index_wires: Sequence[int], table: Sequence[int]) -> int:
        """table[index] where index is read MSB-first from index_wires."""
        if len(table) != 1 << len(index_wires):
            raise ValueError(f"table of length {len(table)} does not match {len(index_wires)} index wires")
        memo: dict[tuple[int, tuple[int, ...]], int] = {}

        def tree(depth: int, entries: tuple[int, ...]) -> int:
            if all(entries):
                return ONE
            if not any(entries):
                return ZERO
            key = (depth, entries)
            if key not in memo:
                half = len(entries) // 2
                memo[key] = self.mux(index_wires[depth], tree(depth + 1, entries[:half]), tree(depth + 1, entries[half:]))
            return memo[key]

        return tree(0, tuple(int(bool(t)) for t in table))

    def at_least(self, wires: Sequence[int], threshold: int) -> int:
        """1 iff at least `threshold` of the wires are 1."""
        if threshold <= 0:
            return ONE
        if threshold > len(wires):
            return ZERO
        # counts[j] == "at least j of the wires seen so far are 1"
        counts = [ONE] + [ZERO] * threshold
        for wire in wires:
            for j in range(threshold, 0, -1):
                counts[j] = self.or_(counts[j], self.and_(counts[j - 1], wire))
        return counts[threshold]

    def embed(self, c: Circuit, input_wires: Sequence[int]) -> int:
        """Copy c into this builder with its inputs driven by input_wires."""
        if len(input_wires) != c.n_inputs:
            raise ValueError(f"embedding needs {c.n_inputs} input wires, got {len(input_wires)}")
        wires = list(input_wires)

        def ref(i: int) -> int:
            return i if i in (ZERO, ONE) else wires[i]

        for gate in c.gates:
            args = [ref(a) for a in gate.args]
            if gate.op == "CONST0":
                wires.append(ZERO)
            elif gate.op == "CONST1":
                wires.append(ONE)
            elif gate.op == "NOT":
                wires.append(self.not_(args[0]))
            elif gate.op == "AND":
                wires.append(self.and_(*args))
            elif gate.op == "OR":
                wires.append(self.or_(*args))
            else:
                wires.append(self.xor(*args))
        return wires[c.output]

    def build(self, output: int, *, name: str = "") -> Circuit:
        """Freeze the gates reachable from `output` into a Circuit."""
        n_inputs = self.n_r + self.n_w
        gates = list(self._gates)
        if output in (ZERO, ONE):
            gates.append(Gate("CONST1" if output == ONE else "CONST0"))
            output = n_inputs + len(gates) - 1
        live = {output}
        for index in range(len(gates) - 1, -1, -1):
            if n_inputs + index in live:
                live.update(a for a in gates[index].args if a >= n_inputs)
        renumber: dict[int, int] = {}
        kept = []
        for index, gate in enumerate(gates):
            wire = n_inputs + index
            if wire not in live:
                continue
            args = tuple(a if a < n_inputs else renumber[a] for a in gate.args)
            renumber[wire] = n_inputs + len(kept)
            kept.append(Gate(gate.op, args))
        out = output if output < n_inputs else renumber[output]
        return Circuit(n_r=self.n_r, n_w=self.n_w, gates=tuple(kept), output=out, name=name)


def pad_witness(c: Circuit, n_total: int) -> Circuit:
    """C'(r, w ‖ p) = C(r, w) ∧ p = 0: same satisfiable challenges, same witness count."""
    if n_total < c.n_w:
        raise ValueError(f"cannot pad N={c.n_w} down to {n_total}")
    if n_total == c.n_w:
        return c
    builder = CircuitBuilder(c.n_r, n_total)
    core = builder.embed(c, builder.r_wires + builder.w_wires[: c.n_w])
    padding_clear = builder.not_(builder.any_of(builder.w_wires[c.n_w :]))
    return builder.build(builder.and_(core, padding_clear), name=c.name)


def replication_count(l: int, n_prime: int) -> int:
    """b = ceil(N'/l)."""
    if l < 1:
        raise ValueError(f"l must be positive, got {l}")
    return -(-n_prime // l)


def build_replicated_Q(c: Circuit, code: CodeSpec) -> Circuit:
    """Q(r_1..r_b, u) = [r_1 = ... = r_b] ∧ [u ∈ image(E)] ∧ C(r_1, w).

    w is read from the first N positions of u, which requires a systematic
    code with the identity in those columns; membership is the GF(2) parity
    check of every remaining position. All inputs of Q are in its r-block.
    """
    if code.n != c.n_w:
        raise ValueError(f"code/circuit length mismatch: code N={code.n}, circuit N={c.n_w}")
    if not code.systematic:
        raise ValueError(f"code {code.id} is not systematic")
    g = generator_matrix(code)
    if not np.array_equal(g[:, : code.n], np.eye(code.n, dtype=np.uint8)):
        raise ValueError(f"code {code.id} does not carry the message in its leading positions")
    l, n, n_prime = c.n_r, c.n_w, code.n_prime
    b = replication_count(l, n_prime)
    builder = CircuitBuilder(b * l + n_prime, 0)
    blocks = [[builder.r(i * l + j) for j in range(l)] for i in range(b)]
    u = [builder.r(b * l + p) for p in range(n_prime)]
    same = builder.all_of(builder.eq(blocks[0][j], block[j]) for block in blocks[1:] for j in range(l))
    checks = []
    for p in range(n, n_prime):
        expected = builder.parity(u[j] for j in range(n) if g[j, p])
        checks.append(builder.eq(u[p], expected))
    member = builder.all_of(checks)
    accept = builder.embed(c, blocks[0] + u[:n])
    q = builder.build(builder.all_of([same, member, accept]), name=f"Q[{c.id}|{code.id}]")
    logger.debug("Q for %s: b=%d inputs=%d gates=%d", c.id, b, q.n_inputs, q.size)
    return q


# --- text format ---------------------------------------------------------

_GATE_LINE = re.compile(r"^g(\d+)\s*=\s*([A-Z0-9]+)((?:\s+\S+)*)\s*$", re.ASCII)
_OPERAND = re.compile(r"^([rwg])(\d+)$", re.ASCII)


def _format_ref(c: Circuit, wire: int) -> str:
    if wire == ZERO:
        return "0"
    if wire == ONE:
        return "1"
    if wire < c.n_r:
        return f"r{wire + 1}"
    if wire < c.n_inputs:
        return f"w{wire - c.n_r + 1}"
    return f"g{wire - c.n_inputs + 1}"


def format_circuit(c: Circuit) -> str:
    lines = [f"circuit ℓ={c.n_r} N={c.n_w}"]
    for index, gate in enumerate(c.gates):
        operands = "".join(f" {_format_ref(c, a)}" for a in gate.args)
        lines.append(f"g{index + 1} = {gate.op}{operands}")
    lines.append(f"output {_format_ref(c, c.output)}")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str, *, source: str = "") -> Circuit:
    n_r = n_w = None
    gates: list[Gate] = []
    output: int | None = None

    def fail(message: str, lineno: int) -> FormatError:
        return FormatError(message, lineno=lineno, source=source)

    def operand(token: str, lineno: int) -> int:
        if token == "0":
            return ZERO
        if token == "1":
            return ONE
        match = _OPERAND.match(token)
        if not match:
            raise fail(f"bad operand {token!r}", lineno)
        kind, number = match.group(1), int(match.group(2))
        bound = {"r": n_r, "w": n_w, "g": len(gates)}[kind]
        if not 1 <= number <= bound:
            raise fail(f"operand {token} out of range", lineno)
        offset = {"r": 0, "w": n_r, "g": n_r + n_w}[kind]
        return offset + number - 1

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if output is not None:
            raise fail(f"trailing content after output: {line!r}", lineno)
        if n_r is None:
            fields = line.split()
            if fields[0] != "circuit":
                raise fail("expected header 'circuit ℓ=<int> N=<int>'", lineno)
            values = {}
            for item in fields[1:]:
                key, _, value = item.partition("=")
                key = "ℓ" if key == "l" else key
                if key not in ("ℓ", "N") or not (value.isascii() and value.isdecimal()):
                    raise fail(f"bad header field {item!r}", lineno)
                values[key] = int(value)
            if set(values) != {"ℓ", "N"}:
                raise fail("header needs both ℓ= and N=", lineno)
            n_r, n_w = values["ℓ"], values["N"]
            continue
        if line.startswith("output"):
            fields = line.split()
            if len(fields) != 2 or fields[1] in ("0", "1"):
                raise fail("expected 'output <wire>'", lineno)
            output = operand(fields[1], lineno)
            continue
        match = _GATE_LINE.match(line)
        if not match:
            raise fail(f"unrecognized line {line!r}", lineno)
        if int(match.group(1)) != len(gates) + 1:
            raise fail(f"gate g{match.group(1)} out of sequence, expected g{len(gates) + 1}", lineno)
        op = match.group(2)
        if op not in OP_ARITY:
            raise fail(f"unknown operation {op!r}", lineno)
        tokens = match.group(3).split()
        if len(tokens) != OP_ARITY[op]:
            raise fail(f"{op} takes {OP_ARITY[op]} operands, got {len(tokens)}", lineno)
        gates.append(Gate(op, tuple(operand(t, lineno) for t in tokens)))
    if n_r is None:
        raise FormatError("missing circuit header", source=source)
    if output is None:
        raise FormatError("missing output line", source=source)
    return Circuit(n_r=n_r, n_w=n_w, gates=tuple(gates), output=output)


def read_circuit(path: str | Path) -> Circuit:
    path = Path(path)
    return parse_circuit(path.read_text(encoding="utf-8"), source=str(path))


def write_circuit(path: str | Path, c: Circuit) -> None:
    Path(path).write_text(format_circuit(c), encoding="utf-8")
