"""Circuit C(r, w) -> stochastic 2-CSP psi(r, u, Z) with the provers that
turn near-satisfying Merlin strategies back into witnesses.

psi's Merlin variables are the PCPP proof variables (the hub first) followed
by u_1..u_{N'}. Every u axis carries symbols {0, 1} plus non-Boolean symbols
on which every constraint rejects.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .circuits import (
    Circuit,
    DEFAULT_LIMIT_WITNESS,
    build_replicated_Q,
    eval_batch,
    eval_circuit,
    pad_witness,
    replication_count,
    satisfying_inputs,
)
from .codes import FAIL, CodeSpec, build_code, decode, encode, encode_batch
from .csp import Assignment, Csp, MerlinVar, gap_profile, hub_scores, make_constraint, val
from .hamming import (
    ENTROPY_TOLERANCE,
    INFINITE,
    BallSampler,
    Bits,
    bits_to_int,
    distances_to_set,
    entropy,
    int_to_bits,
    ints_to_rows,
    rows_to_ints,
    sphere_volume,
    xor_bits,
)
from .parallel import shard_seeds
from .pcpp import PcppOutput, build_pcpp

logger = logging.getLogger(__name__)

GAMMA_GRID = 64
GAMMA_FINE_GRID = 1024
DEFAULT_U_ALPHABET = 3


@dataclass(frozen=True, slots=True)
class ReductionParams:
    epsilon: Fraction
    gamma: Fraction
    nu: Fraction
    beta: Fraction
    eta: Fraction
    b: int = 0
    u_alphabet: int = DEFAULT_U_ALPHABET

    def validate(self) -> None:
        if self.nu != self.eta * self.beta * self.gamma / 4:
            raise ValueError(f"nu={self.nu} does not equal eta*beta*gamma/4")
        if entropy(self.gamma) > float(self.epsilon) + ENTROPY_TOLERANCE:
            raise ValueError(f"H(gamma)={entropy(self.gamma):.6f} exceeds epsilon={self.epsilon}")
        if self.u_alphabet < 2:
            raise ValueError(f"u_alphabet must be at least 2, got {self.u_alphabet}")


@dataclass(frozen=True)
class ReductionOutput:
    psi: Csp
    params: ReductionParams
    circuit: Circuit
    padded: Circuit
    code: CodeSpec
    pcpp: PcppOutput
    q_circuit: Circuit
    provenance: dict[str, str] = field(default_factory=dict)

    @property
    def l(self) -> int:
        return self.circuit.n_r

    @property
    def proof_vars(self) -> int:
        """Number of PCPP proof variables ahead of the u block."""
        return self.pcpp.proof_size

    @property
    def fast_path(self) -> bool:
        return self.psi.hub is not None


@dataclass(frozen=True, slots=True)
class Proof:
    u: tuple[int, ...]
    Z: tuple[int, ...]

    def symbols(self) -> tuple[int, ...]:
        return self.Z + self.u


def proof_from_symbols(out: ReductionOutput, z: Sequence[int]) -> Proof:
    if len(z) != len(out.psi.merlin):
        raise ValueError(f"|z|={len(z)} does not match {len(out.psi.merlin)} merlin variables")
    k = out.proof_vars
    return Proof(u=tuple(int(s) for s in z[k:]), Z=tuple(int(s) for s in z[:k]))


# --- parameters ----------------------------------------------------------


def choose_parameters(epsilon: Fraction | float, eta: Fraction | float, beta: Fraction | float) -> ReductionParams:
    """Largest gamma on the i/64 grid (i <= 32) with H(gamma) <= epsilon, then i/1024."""
    epsilon, eta, beta = Fraction(epsilon), Fraction(eta), Fraction(beta)
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    # eta = 0 is accepted for the identity code; nu is then 0.
    if not 0 <= eta <= 1:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    gamma = None
    for grid in (GAMMA_GRID, GAMMA_FINE_GRID):
        for i in range(grid // 2, 0, -1):
            candidate = Fraction(i, grid)
            if entropy(candidate) <= float(epsilon) + ENTROPY_TOLERANCE:
                gamma = candidate
                break
        if gamma is not None:
            break
    if gamma is None:
        raise ValueError(f"epsilon={epsilon} is below H(1/{GAMMA_FINE_GRID}); no gamma qualifies")
    return ReductionParams(epsilon=epsilon, gamma=gamma, nu=eta * beta * gamma / 4, beta=beta, eta=eta)


# --- construction --------------------------------------------------------


def _extend_u_axis(table: np.ndarray, axis: int, size: int) -> np.ndarray:
    pad = [(0, 0)] * table.ndim
    pad[axis] = (0, size - table.shape[axis])
    return np.pad(table, pad, constant_values=False)


def build_stochastic_csp(
    c: Circuit,
    code: CodeSpec | str,
    backend: str = "enumerative",
    epsilon: Fraction | float = Fraction(1, 2),
    *,
    u_alphabet: int = DEFAULT_U_ALPHABET,
    limit_witness: int = DEFAULT_LIMIT_WITNESS,
) -> ReductionOutput:
    l, n = c.n_r, c.n_w
    if n < 1:
        raise ValueError("the circuit needs at least one witness bit")
    if l < 1:
        raise ValueError("the circuit needs at least one challenge bit")
    if isinstance(code, str):
        code = build_code(code, max(n, l))
    if code.n < max(n, l):
        raise ValueError(f"code message length {code.n} is below max(N, l) = {max(n, l)}")
    padded = pad_witness(c, code.n)
    q = build_replicated_Q(padded, code)
    b = replication_count(l, code.n_prime)

    # Q's accepting set is (r^b, E(w ‖ 0)) over accepting (r, w) of C.
    accepted = ints_to_rows(satisfying_inputs(c, limit=limit_witness), c.n_inputs)
    messages = np.concatenate(
        [accepted[:, l:], np.zeros((accepted.shape[0], code.n - n), dtype=np.uint8)], axis=1
    )
    codewords = encode_batch(code, messages)
    hint = np.concatenate([np.tile(accepted[:, :l], (1, b)), codewords], axis=1)
    pcpp = build_pcpp(q, backend, accepting=[tuple(row) for row in hint])

    params = choose_parameters(epsilon, code.eta, pcpp.claimed_beta)
    params = ReductionParams(
        epsilon=params.epsilon,
        gamma=params.gamma,
        nu=params.nu,
        beta=params.beta,
        eta=params.eta,
        b=b,
        u_alphabet=u_alphabet,
    )
    params.validate()

    source = pcpp.csp
    k = len(source.merlin)
    u_base = l + k

    def target(v: int) -> int:
        if v < b * l:
            return v % l
        if v < source.n_arthur:
            return u_base + (v - b * l)
        return l + (v - source.n_arthur)

    constraints = []
    for constraint in source.constraints:
        scope = [target(v) for v in constraint.scope]
        table = np.array(constraint.table, dtype=bool)
        if len(scope) == 2 and scope[0] == scope[1]:
            table = np.diagonal(table).copy()
            scope = scope[:1]
        for axis, v in enumerate(scope):
            if v >= u_base:
                table = _extend_u_axis(table, axis, u_alphabet)
        constraints.append(make_constraint(scope, table))

    merlin = tuple(source.merlin) + tuple(MerlinVar(name=f"u{p + 1}", size=u_alphabet) for p in range(code.n_prime))
    meta = {
        "epsilon": str(params.epsilon),
        "gamma": str(params.gamma),
        "nu": str(params.nu),
        "b": str(b),
        "beta": str(params.beta),
        "eta": str(params.eta),
        "backend": pcpp.backend,
        "code": code.id,
        "circuit": c.id,
        "l": str(l),
        "N": str(n),
        "N_padded": str(code.n),
        "N_prime": str(code.n_prime),
        "constant_alphabet": str(pcpp.constant_alphabet).lower(),
        "fast_path": "hub" if source.hub is not None else "none",
    }
    psi = Csp(
        n_arthur=l,
        merlin=merlin,
        constraints=tuple(constraints),
        arity=2,
        meta=meta,
        hub=l if source.hub is not None else None,
    )
    logger.info(
        "reduced circuit %s: l=%d N=%d N'=%d b=%d |Q|=%d m=%d alphabet=%d",
        c.id, l, n, code.n_prime, b, q.size, psi.m, pcpp.alphabet_size,
    )
    return ReductionOutput(
        psi=psi,
        params=params,
        circuit=c,
        padded=padded,
        code=code,
        pcpp=pcpp,
        q_circuit=q,
        provenance={"circuit": c.id, "code": code.id, "backend": pcpp.backend},
    )


# --- provers -------------------------------------------------------------


def honest_proof(out: ReductionOutput, r: Sequence[int], w: Sequence[int]) -> Proof:
    if eval_circuit(out.circuit, r, w) != 1:
        raise ValueError("honest_proof needs an accepting (r, w)")
    w_padded = tuple(int(b) for b in w) + (0,) * (out.code.n - len(w))
    u = encode(out.code, w_padded)
    x = tuple(int(b) for b in r) * out.params.b + u
    return Proof(u=u, Z=out.pcpp.honest_proof(x))


def proof_value(out: ReductionOutput, r: Sequence[int], proof: Proof) -> Fraction:
    return val(out.psi, Assignment(r=tuple(int(b) for b in r), z=proof.symbols()))


def booleanize(u: Sequence[int]) -> Bits:
    """Non-Boolean symbols read as 0."""
    return tuple(s if s in (0, 1) else 0 for s in u)


def decoding_prover(out: ReductionOutput, r: Sequence[int], proof: Proof) -> Bits:
    if len(r) != out.l:
        raise ValueError(f"|r|={len(r)} does not match l={out.l}")
    if len(proof.u) != out.code.n_prime:
        raise ValueError(f"|u|={len(proof.u)} does not match N'={out.code.n_prime}")
    message = decode(out.code, booleanize(proof.u))
    if message is FAIL:
        return (0,) * out.circuit.n_w
    return message[: out.circuit.n_w]


Prover = Callable[[Bits], Proof]


def smoothed_prover(out: ReductionOutput, prover: Prover, seed: int) -> Callable[[Sequence[int]], Bits]:
    """r -> decoding_prover(r + v, prover(r + v)) with v uniform in the floor(gamma*l) ball."""
    sampler = BallSampler(out.l, math.floor(out.params.gamma * out.l), seed)

    def smoothed(r: Sequence[int]) -> Bits:
        shifted = xor_bits(r, sampler.sample())
        return decoding_prover(out, shifted, prover(shifted))

    return smoothed


def garbage_proof(out: ReductionOutput) -> Proof:
    return Proof(u=(0,) * out.code.n_prime, Z=(0,) * out.proof_vars)


def planted_prover(out: ReductionOutput, planted: dict[Bits, Bits]) -> Prover:
    """Honest on the planted challenges (r -> accepting w), all-zero proof elsewhere."""
    proofs = {r: honest_proof(out, r, w) for r, w in planted.items()}
    fallback = garbage_proof(out)
    return lambda r: proofs.get(tuple(r), fallback)


# --- measurements --------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CompletenessReport:
    checked: int
    failures: tuple[Bits, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def completeness_report(out: ReductionOutput, *, limit_witness: int = DEFAULT_LIMIT_WITNESS) -> CompletenessReport:
    """honest_proof reaches Val = 1 for every satisfiable r."""
    accepted = satisfying_inputs(out.circuit, limit=limit_witness)
    seen: dict[Bits, Bits] = {}
    for value in accepted:
        bits = int_to_bits(int(value), out.circuit.n_inputs)
        seen.setdefault(bits[: out.l], bits[out.l :])
    failures = tuple(r for r, w in seen.items() if proof_value(out, r, honest_proof(out, r, w)) != 1)
    return CompletenessReport(checked=len(seen), failures=failures)


@dataclass(frozen=True, slots=True)
class SoundnessReport:
    # (r as int, d(r, R_sat) or INFINITE, Max_z Val)
    records: tuple[tuple[int, int | float, Fraction], ...]
    c_meas: Fraction | float
    unsat_deficit: Fraction | None

    @property
    def violations(self) -> tuple[int, ...]:
        """Challenges far from the satisfiable set yet fully satisfiable."""
        return tuple(r for r, d, v in self.records if d != 0 and v >= 1)


def satisfiable_challenges(c: Circuit, *, limit_witness: int = DEFAULT_LIMIT_WITNESS) -> np.ndarray:
    accepted = satisfying_inputs(c, limit=limit_witness)
    return np.unique(accepted >> c.n_w)


def soundness_report(out: ReductionOutput, *, workers: int = 1, limit_witness: int = DEFAULT_LIMIT_WITNESS) -> SoundnessReport:
    """max Val against d(r, R_sat) for every r; c_meas = min (1 - maxVal) * l / d."""
    l = out.l
    sat = satisfiable_challenges(out.circuit, limit_witness=limit_witness)
    profile = gap_profile(out.psi, workers=workers)
    distance = distances_to_set(np.arange(1 << l, dtype=np.int64), sat)
    records = []
    c_meas: Fraction | float = INFINITE
    for (r, value), d in zip(profile.records, distance):
        d_val: int | float = INFINITE if d < 0 else int(d)
        records.append((r, d_val, value))
        if 0 < d_val < INFINITE:
            candidate = (1 - value) * l / d_val
            if candidate < c_meas:
                c_meas = candidate
    unsat_deficit = None
    if sat.size == 0:
        unsat_deficit = 1 - max((v for _, v in profile.records), default=Fraction(0))
    return SoundnessReport(records=tuple(records), c_meas=c_meas, unsat_deficit=unsat_deficit)


@dataclass(frozen=True, slots=True)
class ChainReport:
    checked: int
    # (r, decoded w) pairs where no r' within gamma*l accepts w
    violations: tuple[tuple[Bits, Bits], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_decoding_chain(out: ReductionOutput, *, limit_witness: int = DEFAULT_LIMIT_WITNESS) -> ChainReport:
    """Every fast-path (Z, optimal u) with Val > 1 - nu decodes to a w accepted at
    some r' with d(r, r') < gamma * l."""
    if not out.fast_path:
        raise ValueError("decoding-chain verification needs the hub fast path")
    psi, l = out.psi, out.l
    m = psi.m
    nu = out.params.nu
    radius = out.params.gamma * l
    # count > m(1 - nu)
    cut = math.floor(m * (1 - nu)) + 1
    accepted = satisfying_inputs(out.circuit, limit=limit_witness)
    by_witness: dict[int, np.ndarray] = {}
    mask = (1 << out.circuit.n_w) - 1
    for value in np.unique(accepted & mask):
        by_witness[int(value)] = accepted[(accepted & mask) == value] >> out.circuit.n_w
    u_ids = list(range(l + out.proof_vars, psi.n_vars))
    checked = 0
    violations = []
    for lo in range(0, 1 << l, 256):
        r_values = np.arange(lo, min(lo + 256, 1 << l), dtype=np.int64)
        rows = ints_to_rows(r_values, l)
        base, choices = hub_scores(psi, rows)
        for i, r_value in enumerate(r_values):
            for z in np.flatnonzero(base[i] >= cut):
                checked += 1
                u = tuple(int(choices[v][i, z]) if v in choices else 0 for v in u_ids)
                r_bits = int_to_bits(int(r_value), l)
                w = decoding_prover(out, r_bits, Proof(u=u, Z=(int(z),)))
                near = by_witness.get(bits_to_int(w))
                if near is None or int(np.bitwise_count(near ^ r_value).min()) >= radius:
                    violations.append((r_bits, w))
    logger.debug("decoding chain: %d high-value strategies checked, %d violations", checked, len(violations))
    return ChainReport(checked=checked, violations=tuple(violations))


@dataclass(frozen=True, slots=True)
class SmoothingReport:
    trials: int
    successes: int
    planted_fraction: float
    radius: int
    volume: int
    predicted: float
    best_fixed_rate: float
    best_fixed_v: Bits

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        if not self.trials:
            return 0.0
        p = self.rate
        return math.sqrt(p * (1 - p) / self.trials)


def smoothing_experiment(
    out: ReductionOutput,
    prover: Prover,
    *,
    planted_fraction: float,
    trials: int,
    seed: int,
) -> SmoothingReport:
    """Success of the smoothed prover on uniform r, against p * 2^{-H(gamma) l}.

    Also reports the best fixed shift v, evaluated exhaustively over r.
    """
    l = out.l
    c = out.circuit
    radius = math.floor(out.params.gamma * l)
    # decoded witness for every challenge the inner prover could be asked about
    all_r = ints_to_rows(np.arange(1 << l, dtype=np.int64), l)
    decoded = np.array(
        [decoding_prover(out, tuple(int(b) for b in row), prover(tuple(int(b) for b in row))) for row in all_r],
        dtype=np.uint8,
    ).reshape(1 << l, c.n_w)

    r_seed, v_seed = shard_seeds(seed, 2)
    rng = np.random.default_rng(r_seed)
    sampler = BallSampler(l, radius, v_seed)
    r_values = rng.integers(0, 1 << l, size=trials, dtype=np.int64)
    shifts = np.array([rows_to_ints(np.array([sampler.sample()], dtype=np.uint8))[0] for _ in range(trials)], dtype=np.int64)
    successes = 0
    if trials:
        rows = np.concatenate([ints_to_rows(r_values, l), decoded[r_values ^ shifts]], axis=1)
        successes = int(eval_batch(c, rows).sum())

    best_rate, best_v = 0.0, (0,) * l
    r_all = np.arange(1 << l, dtype=np.int64)
    ball = ints_to_rows(np.arange(1 << l, dtype=np.int64), l)
    ball = ball[ball.sum(axis=1) <= radius]
    for v_row in ball:
        v = int(rows_to_ints(v_row[None, :])[0])
        rows = np.concatenate([all_r, decoded[r_all ^ v]], axis=1)
        rate = float(eval_batch(c, rows).mean())
        if rate > best_rate:
            best_rate, best_v = rate, tuple(int(b) for b in v_row)
    predicted = planted_fraction * 2.0 ** (-entropy(out.params.gamma) * l)
    return SmoothingReport(
        trials=trials,
        successes=successes,
        planted_fraction=planted_fraction,
        radius=radius,
        volume=sphere_volume(l, radius),
        predicted=predicted,
        best_fixed_rate=best_rate,
        best_fixed_v=best_v,
    )
