"""Assignment testers: circuit -> 2-CSP psi(x, z) with completeness 1 and
soundness Val <= 1 - beta * d(x, C^{-1}(1)) / n.

Backends register by id. The enumerative backend keeps one proof variable
whose alphabet indexes the accepting set; its alphabet is not constant.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol, Sequence

import numpy as np

from .circuits import Circuit, eval_batch, satisfying_inputs
from .csp import Csp, MerlinVar, make_constraint, max_count_batch
from .errors import LimitExceededError
from .hamming import Bits, distances_to_set, int_to_bits, ints_to_rows
from .parallel import shard_map, split_range

logger = logging.getLogger(__name__)

DEFAULT_LIMIT_INPUTS = 16
# certify_security result when no input lies at finite positive distance
MAX = math.inf


@dataclass(frozen=True)
class PcppOutput:
    csp: Csp
    claimed_beta: Fraction
    backend: str
    accepting: tuple[Bits, ...] = ()
    constant_alphabet: bool = False
    _index: dict[Bits, int] = field(default_factory=dict, repr=False, compare=False)

    @property
    def alphabet_size(self) -> int:
        return max((v.size for v in self.csp.merlin), default=1)

    @property
    def proof_size(self) -> int:
        return len(self.csp.merlin)

    @property
    def n_inputs(self) -> int:
        return self.csp.n_arthur

    def honest_proof(self, x: Sequence[int]) -> tuple[int, ...]:
        return _backend(self.backend).honest_proof(self, tuple(int(b) for b in x))


class PcppBackend(Protocol):
    def build(self, c: Circuit, *, accepting: Sequence[Sequence[int]] | None, limit: int) -> PcppOutput: ...

    def honest_proof(self, out: PcppOutput, x: Bits) -> tuple[int, ...]: ...


class EnumerativeBackend:
    name = "enumerative"

    def build(self, c: Circuit, *, accepting: Sequence[Sequence[int]] | None = None, limit: int = DEFAULT_LIMIT_INPUTS) -> PcppOutput:
        n = c.n_inputs
        if accepting is None:
            if n > limit:
                raise LimitExceededError("pcpp inputs", n, limit)
            members = [int_to_bits(int(v), n) for v in satisfying_inputs(c, limit=limit)]
        else:
            members = sorted({tuple(int(b) for b in x) for x in accepting})
            if any(len(x) != n for x in members):
                raise ValueError(f"accepting hint entries must have length {n}")
            if members:
                accepted = eval_batch(c, np.array(members, dtype=np.uint8))
                if not accepted.all():
                    bad = members[int(np.flatnonzero(~accepted)[0])]
                    raise ValueError(f"hinted input {''.join(map(str, bad))} is rejected by the circuit")
        z = n
        if not members:
            merlin = (MerlinVar(name="Z", size=1),)
            constraints = (make_constraint((z,), [False]),)
        else:
            matrix = np.array(members, dtype=np.uint8)
            merlin = (MerlinVar(name="Z", size=len(members)),)
            constraints = tuple(
                make_constraint((z, i), np.stack([matrix[:, i] == 0, matrix[:, i] == 1], axis=1)) for i in range(n)
            )
        meta = {"backend": self.name, "claimed_beta": "1", "constant_alphabet": "false"}
        csp = Csp(n_arthur=n, merlin=merlin, constraints=constraints, arity=2, meta=meta, hub=z)
        logger.debug("enumerative pcpp: %d inputs, alphabet %d", n, merlin[0].size)
        return PcppOutput(
            csp=csp,
            claimed_beta=Fraction(1),
            backend=self.name,
            accepting=tuple(members),
            _index={x: i for i, x in enumerate(members)},
        )

    def honest_proof(self, out: PcppOutput, x: Bits) -> tuple[int, ...]:
        try:
            return (out._index[x],)
        except KeyError:
            raise ValueError(f"input {''.join(map(str, x))} is not accepted; no honest proof exists") from None


PCPP_BACKENDS: dict[str, PcppBackend] = {"enumerative": EnumerativeBackend()}


def _backend(name: str) -> PcppBackend:
    try:
        return PCPP_BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown pcpp backend {name!r}; known: {sorted(PCPP_BACKENDS)}") from None


def build_enumerative_pcpp(
    c: Circuit, accepting: Sequence[Sequence[int]] | None = None, *, limit: int = DEFAULT_LIMIT_INPUTS
) -> PcppOutput:
    return PCPP_BACKENDS["enumerative"].build(c, accepting=accepting, limit=limit)


def build_pcpp(
    c: Circuit,
    backend: str = "enumerative",
    *,
    accepting: Sequence[Sequence[int]] | None = None,
    limit: int = DEFAULT_LIMIT_INPUTS,
) -> PcppOutput:
    return _backend(backend).build(c, accepting=accepting, limit=limit)


def _certify_shard(task: tuple[Circuit, PcppOutput, np.ndarray, int, int]) -> Fraction | float:
    c, p, members, lo, hi = task
    n = c.n_inputs
    x_values = np.arange(lo, hi, dtype=np.int64)
    distance = distances_to_set(x_values, members)
    counts, _ = max_count_batch(p.csp, ints_to_rows(x_values, n), limit_merlin=1 << 62)
    best: Fraction | float = MAX
    m = p.csp.m
    for d, count in zip(distance, counts):
        if d <= 0:
            continue
        beta = Fraction(n * (m - int(count)), m * int(d))
        if beta < best:
            best = beta
    return best


def certify_security(c: Circuit, p: PcppOutput, *, limit: int = DEFAULT_LIMIT_INPUTS, workers: int = 1) -> Fraction | float:
    """min over x at finite positive distance of n * (1 - max_z Val(x, z)) / d(x, C^{-1}(1)).

    Returns MAX when no such x exists.
    """
    n = c.n_inputs
    if n > limit:
        raise LimitExceededError("pcpp inputs", n, limit)
    if p.csp.n_arthur != n:
        raise ValueError(f"pcpp tests {p.csp.n_arthur} inputs but the circuit has {n}")
    members = satisfying_inputs(c, limit=limit)
    if not p.csp.constraints:
        return MAX
    shards = [(c, p, members, lo, hi) for lo, hi in split_range(1 << n, 1 << 12)]
    return min(shard_map(_certify_shard, shards, workers), default=MAX)
