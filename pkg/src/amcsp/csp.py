"""Stochastic k-CSPs: Boolean Arthur variables, mixed-alphabet Merlin variables.

Variable ids are global: 0..l-1 are the Arthur variables r_1..r_l, Merlin
variable i has id l+i. Every constraint is an explicit truth table whose axes
follow its scope.
"""

from __future__ import annotations

import functools
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, LimitExceededError
from .hamming import Bits, bits_to_int, ints_to_rows
from .parallel import shard_map, split_range

logger = logging.getLogger(__name__)

DEFAULT_LIMIT_MERLIN = 1 << 20
DEFAULT_LIMIT_ARTHUR = 20
# rows x merlin tuples evaluated per brute-force step
_BRUTE_CELLS = 1 << 22
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ARTHUR_NAME = re.compile(r"^r(\d+)$")


@dataclass(frozen=True, slots=True)
class MerlinVar:
    name: str
    size: int


@dataclass(frozen=True, eq=False, slots=True)
class Constraint:
    scope: tuple[int, ...]
    table: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Constraint):
            return NotImplemented
        return self.scope == other.scope and self.table.shape == other.table.shape and bool(
            np.array_equal(self.table, other.table)
        )

    __hash__ = None  # type: ignore[assignment]


def make_constraint(scope: Sequence[int], table) -> Constraint:
    array = np.array(table, dtype=bool)
    array.setflags(write=False)
    return Constraint(scope=tuple(int(v) for v in scope), table=array)


@dataclass(frozen=True, slots=True)
class Assignment:
    r: Bits
    z: tuple[int, ...] = ()


@dataclass(frozen=True)
class Csp:
    n_arthur: int
    merlin: tuple[MerlinVar, ...]
    constraints: tuple[Constraint, ...]
    arity: int = 2
    meta: Mapping[str, str] = field(default_factory=dict)
    # Merlin var id whose fixing leaves the other Merlin vars independent.
    hub: int | None = None

    def __post_init__(self) -> None:
        if self.n_arthur < 0:
            raise ValueError(f"arthur variable count must be non-negative, got {self.n_arthur}")
        names = set()
        for var in self.merlin:
            if var.size < 1:
                raise ValueError(f"merlin variable {var.name} has empty alphabet")
            if not _NAME.match(var.name) or _ARTHUR_NAME.match(var.name):
                raise ValueError(f"invalid merlin variable name {var.name!r}")
            if var.name in names:
                raise ValueError(f"duplicate merlin variable name {var.name!r}")
            names.add(var.name)
        for index, constraint in enumerate(self.constraints):
            scope = constraint.scope
            if len(scope) > self.arity:
                raise ValueError(f"constraint {index}: scope of size {len(scope)} exceeds arity {self.arity}")
            if len(set(scope)) != len(scope):
                raise ValueError(f"constraint {index}: repeated variable in scope {scope}")
            for v in scope:
                if not 0 <= v < self.n_vars:
                    raise ValueError(f"constraint {index}: variable id {v} out of range")
            expected = tuple(self.alphabet(v) for v in scope)
            if constraint.table.shape != expected:
                raise ValueError(f"constraint {index}: table shape {constraint.table.shape} != alphabet product {expected}")
        if self.hub is not None and (not self.merlin or self.hub != self.n_arthur):
            raise ValueError("hub must be the first merlin variable")

    @property
    def n_vars(self) -> int:
        return self.n_arthur + len(self.merlin)

    @property
    def m(self) -> int:
        return len(self.constraints)

    def alphabet(self, v: int) -> int:
        return 2 if v < self.n_arthur else self.merlin[v - self.n_arthur].size

    def var_name(self, v: int) -> str:
        return f"r{v + 1}" if v < self.n_arthur else self.merlin[v - self.n_arthur].name

    @property
    def merlin_space(self) -> int:
        return math.prod(var.size for var in self.merlin)

    @functools.cached_property
    def _plan(self) -> "_HubPlan | None":
        return _hub_plan(self)


class Verdict(str, Enum):
    YES = "YES"
    NO = "NO"
    NEITHER = "NEITHER"


@dataclass(frozen=True, slots=True)
class Exhaustive:
    pass


@dataclass(frozen=True, slots=True)
class Sampled:
    trials: int
    seed: int


EXHAUSTIVE = Exhaustive()


@dataclass(frozen=True, slots=True)
class GapProfile:
    n_arthur: int
    m: int
    # (r as int, Max_z Val) per enumerated or sampled r
    records: tuple[tuple[int, Fraction], ...]
    exhaustive: bool
    seed: int | None = None

    @property
    def count(self) -> int:
        return len(self.records)

    @property
    def frac_full(self) -> float:
        if not self.records:
            return 0.0
        return sum(1 for _, v in self.records if v == 1) / self.count

    def frac_above(self, epsilon: Fraction | float) -> float:
        """Fraction of records with Max_z Val > 1 - epsilon."""
        if not self.records:
            return 0.0
        threshold = 1 - Fraction(epsilon)
        return sum(1 for _, v in self.records if v > threshold) / self.count

    def stderr(self, fraction: float) -> float:
        if self.exhaustive or not self.records:
            return 0.0
        return math.sqrt(fraction * (1 - fraction) / self.count)

    @property
    def min_value(self) -> Fraction:
        return min((v for _, v in self.records), default=Fraction(1))


# --- value ---------------------------------------------------------------


def _check_assignment(csp: Csp, a: Assignment) -> None:
    if len(a.r) != csp.n_arthur:
        raise ValueError(f"|r|={len(a.r)} does not match arthur count {csp.n_arthur}")
    if len(a.z) != len(csp.merlin):
        raise ValueError(f"|z|={len(a.z)} does not match merlin count {len(csp.merlin)}")
    for var, symbol in zip(csp.merlin, a.z):
        if not 0 <= symbol < var.size:
            raise ValueError(f"symbol {symbol} out of range for {var.name} (alphabet {var.size})")


def satisfied_count(csp: Csp, a: Assignment) -> int:
    _check_assignment(csp, a)
    values = tuple(int(b) for b in a.r) + tuple(int(s) for s in a.z)
    return sum(1 for c in csp.constraints if c.table[tuple(values[v] for v in c.scope)])


def val(csp: Csp, a: Assignment) -> Fraction:
    """Fraction of satisfied constraints; an empty constraint list has value 1."""
    if not csp.constraints:
        _check_assignment(csp, a)
        return Fraction(1)
    return Fraction(satisfied_count(csp, a), csp.m)


# --- maximization over Merlin -------------------------------------------


def _reduce_on_r(csp: Csp, constraint: Constraint, r_rows: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Restrict the table to each row of r; returns (rows x merlin axes, merlin ids)."""
    arthur_axes = [i for i, v in enumerate(constraint.scope) if v < csp.n_arthur]
    merlin_ids = [v for v in constraint.scope if v >= csp.n_arthur]
    table = constraint.table.astype(np.int64)
    if not arthur_axes:
        return np.broadcast_to(table, (r_rows.shape[0], *table.shape)), merlin_ids
    moved = np.moveaxis(table, arthur_axes, list(range(len(arthur_axes))))
    index = tuple(r_rows[:, constraint.scope[i]].astype(np.intp) for i in arthur_axes)
    return moved[index], merlin_ids


@dataclass(frozen=True, slots=True)
class _HubPlan:
    hub: int
    # constraint indices per satellite id, and those touching only hub/arthur
    satellites: tuple[tuple[int, tuple[int, ...]], ...]
    hub_only: tuple[int, ...]


def _hub_plan(csp: Csp) -> _HubPlan | None:
    if csp.hub is None:
        return None
    by_satellite: dict[int, list[int]] = {}
    hub_only = []
    for index, constraint in enumerate(csp.constraints):
        others = [v for v in constraint.scope if v >= csp.n_arthur and v != csp.hub]
        if len(others) > 1:
            return None
        if others:
            by_satellite.setdefault(others[0], []).append(index)
        else:
            hub_only.append(index)
    return _HubPlan(
        hub=csp.hub,
        satellites=tuple((s, tuple(ids)) for s, ids in sorted(by_satellite.items())),
        hub_only=tuple(hub_only),
    )


def _hub_scores(csp: Csp, plan: _HubPlan, r_rows: np.ndarray) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    rows = r_rows.shape[0]
    hub_size = csp.alphabet(plan.hub)
    base = np.zeros((rows, hub_size), dtype=np.int64)
    for index in plan.hub_only:
        reduced, merlin_ids = _reduce_on_r(csp, csp.constraints[index], r_rows)
        base += reduced if merlin_ids else reduced[:, None]
    best_symbol = {}
    for satellite, indices in plan.satellites:
        score = np.zeros((rows, hub_size, csp.alphabet(satellite)), dtype=np.int64)
        for index in indices:
            reduced, merlin_ids = _reduce_on_r(csp, csp.constraints[index], r_rows)
            if merlin_ids == [satellite]:
                score += reduced[:, None, :]
            elif merlin_ids == [plan.hub, satellite]:
                score += reduced
            else:
                score += np.swapaxes(reduced, 1, 2)
        base += score.max(axis=2)
        best_symbol[satellite] = score.argmax(axis=2)
    return base, best_symbol


def hub_scores(csp: Csp, r_rows: np.ndarray) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Best satisfied count for every hub symbol (rows x hub alphabet), and each
    satellite's optimal symbol given that hub symbol."""
    plan = csp._plan
    if plan is None:
        raise ValueError("csp has no hub structure")
    r_rows = np.asarray(r_rows, dtype=np.uint8)
    return _hub_scores(csp, plan, r_rows)


def _max_hub(csp: Csp, plan: _HubPlan, r_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows = r_rows.shape[0]
    base, best_symbol = _hub_scores(csp, plan, r_rows)
    hub_value = base.argmax(axis=1)
    counts = base[np.arange(rows), hub_value]
    z = np.zeros((rows, len(csp.merlin)), dtype=np.int64)
    z[:, plan.hub - csp.n_arthur] = hub_value
    for satellite, choice in best_symbol.items():
        z[:, satellite - csp.n_arthur] = choice[np.arange(rows), hub_value]
    return counts, z


def _max_brute(csp: Csp, r_rows: np.ndarray, limit_merlin: int) -> tuple[np.ndarray, np.ndarray]:
    space = csp.merlin_space
    if space > limit_merlin:
        raise LimitExceededError("merlin search space", space, limit_merlin)
    rows = r_rows.shape[0]
    sizes = tuple(var.size for var in csp.merlin)
    reduced = [_reduce_on_r(csp, c, r_rows) for c in csp.constraints]
    best = np.full(rows, -1, dtype=np.int64)
    best_index = np.zeros(rows, dtype=np.int64)
    step = max(1, _BRUTE_CELLS // max(rows, 1))
    for lo, hi in split_range(space, step):
        flat = np.arange(lo, hi, dtype=np.int64)
        z = np.stack(np.unravel_index(flat, sizes), axis=1) if sizes else np.zeros((hi - lo, 0), dtype=np.int64)
        counts = np.zeros((rows, hi - lo), dtype=np.int64)
        for table, merlin_ids in reduced:
            if not merlin_ids:
                counts += table[:, None]
                continue
            index = tuple(z[:, v - csp.n_arthur] for v in merlin_ids)
            counts += table[(slice(None), *index)]
        chunk_best = counts.argmax(axis=1)
        chunk_value = counts[np.arange(rows), chunk_best]
        better = chunk_value > best
        best = np.where(better, chunk_value, best)
        best_index = np.where(better, lo + chunk_best, best_index)
    z = np.stack(np.unravel_index(best_index, sizes), axis=1) if sizes else np.zeros((rows, 0), dtype=np.int64)
    return best, z


def max_count_batch(csp: Csp, r_rows: np.ndarray, *, limit_merlin: int = DEFAULT_LIMIT_MERLIN) -> tuple[np.ndarray, np.ndarray]:
    """Max satisfied-constraint count and the lexicographically first maximizer, per row of r."""
    r_rows = np.asarray(r_rows, dtype=np.uint8)
    if r_rows.ndim != 2 or r_rows.shape[1] != csp.n_arthur:
        raise ValueError(f"expected rows of width {csp.n_arthur}, got shape {r_rows.shape}")
    plan = csp._plan
    if plan is not None:
        return _max_hub(csp, plan, r_rows)
    return _max_brute(csp, r_rows, limit_merlin)


def max_val_batch(csp: Csp, r_rows: np.ndarray, *, limit_merlin: int = DEFAULT_LIMIT_MERLIN) -> list[Fraction]:
    counts, _ = max_count_batch(csp, r_rows, limit_merlin=limit_merlin)
    if not csp.constraints:
        return [Fraction(1)] * len(counts)
    return [Fraction(int(c), csp.m) for c in counts]


def max_val_over_z(csp: Csp, r: Sequence[int], *, limit_merlin: int = DEFAULT_LIMIT_MERLIN) -> tuple[Fraction, tuple[int, ...]]:
    if len(r) != csp.n_arthur:
        raise ValueError(f"|r|={len(r)} does not match arthur count {csp.n_arthur}")
    counts, z = max_count_batch(csp, np.array([list(r)], dtype=np.uint8), limit_merlin=limit_merlin)
    value = Fraction(1) if not csp.constraints else Fraction(int(counts[0]), csp.m)
    return value, tuple(int(s) for s in z[0])


# --- gap profiles --------------------------------------------------------


def _profile_shard(task: tuple[Csp, int, int, int]) -> list[int]:
    csp, lo, hi, limit_merlin = task
    counts, _ = max_count_batch(csp, ints_to_rows(np.arange(lo, hi), csp.n_arthur), limit_merlin=limit_merlin)
    return [int(c) for c in counts]


def gap_profile(
    csp: Csp,
    mode: Exhaustive | Sampled = EXHAUSTIVE,
    *,
    limit_arthur: int = DEFAULT_LIMIT_ARTHUR,
    limit_merlin: int = DEFAULT_LIMIT_MERLIN,
    workers: int = 1,
) -> GapProfile:
    def value(count: int) -> Fraction:
        return Fraction(1) if not csp.constraints else Fraction(count, csp.m)

    if isinstance(mode, Exhaustive):
        if csp.n_arthur > limit_arthur:
            raise LimitExceededError("l", csp.n_arthur, limit_arthur)
        shards = [(csp, lo, hi, limit_merlin) for lo, hi in split_range(1 << csp.n_arthur, 1 << 10)]
        counts = [c for part in shard_map(_profile_shard, shards, workers) for c in part]
        records = tuple((r, value(c)) for r, c in enumerate(counts))
        return GapProfile(n_arthur=csp.n_arthur, m=csp.m, records=records, exhaustive=True)
    if mode.trials < 0:
        raise ValueError(f"trials must be non-negative, got {mode.trials}")
    rng = np.random.default_rng(mode.seed)
    rows = rng.integers(0, 2, size=(mode.trials, csp.n_arthur), dtype=np.uint8)
    records_list = []
    for lo, hi in split_range(mode.trials, 1 << 10):
        counts, _ = max_count_batch(csp, rows[lo:hi], limit_merlin=limit_merlin)
        records_list.extend((bits_to_int(row), value(int(c))) for row, c in zip(rows[lo:hi], counts))
    return GapProfile(n_arthur=csp.n_arthur, m=csp.m, records=tuple(records_list), exhaustive=False, seed=mode.seed)


def classify_promise(profile: GapProfile, epsilon: Fraction | float, s: Fraction | float) -> Verdict:
    """YES, NO or NEITHER for the gap promise; never raises.

    Outside 0 < epsilon <= 1 and 0 <= s < 1 the NO side is empty, so anything
    short of YES is NEITHER.
    """
    if profile.records and all(v == 1 for _, v in profile.records):
        return Verdict.YES
    if not (0 < epsilon <= 1 and 0 <= s < 1):
        logger.debug("no NO side for epsilon=%s s=%s", epsilon, s)
        return Verdict.NEITHER
    if profile.frac_above(epsilon) <= s:
        return Verdict.NO
    return Verdict.NEITHER


# --- text format ---------------------------------------------------------


def format_csp(csp: Csp) -> str:
    lines = [f"# meta {key}={value}" for key, value in csp.meta.items()]
    if csp.hub is not None:
        lines.append(f"# meta hub={csp.var_name(csp.hub)}")
    merlin = ",".join(f"{v.name}:{v.size}" for v in csp.merlin)
    lines.append(f"csp arthur={csp.n_arthur} merlin={merlin} arity={csp.arity}")
    for constraint in csp.constraints:
        scope = " ".join(csp.var_name(v) for v in constraint.scope)
        table = "".join("1" if t else "0" for t in constraint.table.ravel())
        lines.append(f"scope {scope} ; table {table}")
    return "\n".join(lines) + "\n"


def parse_csp(text: str, *, source: str = "") -> Csp:
    meta: dict[str, str] = {}
    hub_name: str | None = None
    header: tuple[int, tuple[MerlinVar, ...], int] | None = None
    constraints: list[Constraint] = []
    ids: dict[str, int] = {}

    def fail(message: str, lineno: int) -> FormatError:
        return FormatError(message, lineno=lineno, source=source)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("meta ") and header is None:
                key, sep, value = body[5:].partition("=")
                if not sep or not key.strip():
                    raise fail(f"bad meta line {line!r}", lineno)
                if key.strip() == "hub":
                    hub_name = value.strip()
                else:
                    meta[key.strip()] = value.strip()
            continue
        if header is None:
            fields = line.split()
            if fields[0] != "csp" or len(fields) != 4:
                raise fail("expected header 'csp arthur=<l> merlin=<name:size,...> arity=<k>'", lineno)
            values = {}
            for item in fields[1:]:
                key, sep, value = item.partition("=")
                if not sep or key not in ("arthur", "merlin", "arity"):
                    raise fail(f"bad header field {item!r}", lineno)
                values[key] = value
            try:
                n_arthur = int(values["arthur"])
                arity = int(values["arity"])
                merlin = []
                for entry in filter(None, values["merlin"].split(",")):
                    name, _, size = entry.partition(":")
                    merlin.append(MerlinVar(name=name, size=int(size)))
            except (KeyError, ValueError) as exc:
                raise fail(f"bad header: {exc}", lineno) from None
            header = (n_arthur, tuple(merlin), arity)
            ids = {f"r{j + 1}": j for j in range(n_arthur)}
            ids.update({var.name: n_arthur + i for i, var in enumerate(merlin)})
            continue
        scope_part, sep, table_part = line.partition(";")
        scope_fields = scope_part.split()
        table_fields = table_part.split()
        if not sep or not scope_fields or scope_fields[0] != "scope" or len(table_fields) != 2 or table_fields[0] != "table":
            raise fail(f"expected 'scope <v> ... ; table <bits>', got {line!r}", lineno)
        try:
            scope = tuple(ids[name] for name in scope_fields[1:])
        except KeyError as exc:
            raise fail(f"unknown variable {exc.args[0]!r}", lineno) from None
        shape = tuple(2 if v < header[0] else header[1][v - header[0]].size for v in scope)
        bits = table_fields[1]
        if any(ch not in "01" for ch in bits) or len(bits) != math.prod(shape):
            raise fail(f"table needs {math.prod(shape)} bits over {{0,1}}, got {bits!r}", lineno)
        constraints.append(make_constraint(scope, np.array([ch == "1" for ch in bits]).reshape(shape)))
    if header is None:
        raise FormatError("missing csp header", source=source)
    n_arthur, merlin, arity = header
    hub = None
    if hub_name is not None:
        if hub_name not in ids or ids[hub_name] < n_arthur:
            raise FormatError(f"hub {hub_name!r} is not a merlin variable", source=source)
        hub = ids[hub_name]
    try:
        return Csp(n_arthur=n_arthur, merlin=merlin, constraints=tuple(constraints), arity=arity, meta=meta, hub=hub)
    except ValueError as exc:
        raise FormatError(str(exc), source=source) from None


def read_csp(path: str | Path) -> Csp:
    path = Path(path)
    return parse_csp(path.read_text(encoding="utf-8"), source=str(path))


def write_csp(path: str | Path, csp: Csp) -> None:
    Path(path).write_text(format_csp(csp), encoding="utf-8")
