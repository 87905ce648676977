"""Public-coin Arthur-Merlin protocols M_x(r, w), their soundness, repetition,
and the pipeline from an amplified protocol to a stochastic 2-CSP.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .circuits import (
    Circuit,
    CircuitBuilder,
    DEFAULT_LIMIT_ARTHUR,
    DEFAULT_LIMIT_WITNESS,
    read_circuit,
    sat_profile,
    witness_exists_batch,
    write_circuit,
)
from .codes import CodeSpec
from .csp import EXHAUSTIVE, Exhaustive, GapProfile, Sampled, Verdict, classify_promise
from .errors import FormatError
from .expander import ExpanderGraph, walk_seed_length, walk_wires
from .generator import ToyLanguage, default_graph, language_from_predicate
from .hamming import entropy, int_to_bits, sphere_volume
from .reduction import DEFAULT_U_ALPHABET, ReductionOutput, build_stochastic_csp, soundness_report

logger = logging.getLogger(__name__)

LABELS = ("YES", "NO")
AMPLIFIERS = ("parallel", "expander")
ALPHA_GRID = 64
# 2^{-l/D} recovers s_amp only up to float rounding of D.
BOUND_RTOL = 1e-9


@dataclass(frozen=True)
class AmProtocol:
    name: str
    circuit: Circuit
    label: str | None = None
    soundness_target: Fraction | None = None
    perfect_completeness: bool = True
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def l(self) -> int:
        return self.circuit.n_r

    @property
    def n(self) -> int:
        return self.circuit.n_w

    @property
    def experimental(self) -> bool:
        return self.provenance.get("amplifier") == "expander"


def check_completeness(
    p: AmProtocol,
    *,
    limit_arthur: int = DEFAULT_LIMIT_ARTHUR,
    limit_witness: int = DEFAULT_LIMIT_WITNESS,
    workers: int = 1,
) -> bool:
    """Every challenge has an accepting response."""
    return len(sat_profile(p.circuit, limit_arthur=limit_arthur, limit_witness=limit_witness, workers=workers)) == 1 << p.l


def measure_soundness(
    p: AmProtocol,
    mode: Exhaustive | Sampled = EXHAUSTIVE,
    *,
    limit_arthur: int = DEFAULT_LIMIT_ARTHUR,
    limit_witness: int = DEFAULT_LIMIT_WITNESS,
    workers: int = 1,
) -> Fraction | float:
    """Fraction of challenges r for which some w has M(r, w) = 1.

    Exact under EXHAUSTIVE; a Monte Carlo estimate under Sampled.
    """
    if isinstance(mode, Exhaustive):
        profile = sat_profile(p.circuit, limit_arthur=limit_arthur, limit_witness=limit_witness, workers=workers)
        return Fraction(len(profile), 1 << p.l)
    if mode.trials < 1:
        raise ValueError(f"trials must be positive, got {mode.trials}")
    rng = np.random.default_rng(mode.seed)
    challenges = [int(v) for v in rng.integers(0, 1 << p.l, size=mode.trials, dtype=np.int64)]
    return float(witness_exists_batch(p.circuit, challenges, limit_witness=limit_witness).mean())


# --- amplification -------------------------------------------------------


def _repeat_name(p: AmProtocol, suffix: str) -> str:
    return f"{p.name}{suffix}"


def parallel_repeat(p: AmProtocol, t: int) -> AmProtocol:
    """AND of t independent copies over challenges r_1..r_t and responses w_1..w_t."""
    if t < 1:
        raise ValueError(f"t must be positive, got {t}")
    if t == 1:
        return p
    l, n = p.l, p.n
    builder = CircuitBuilder(t * l, t * n)
    copies = [
        builder.embed(p.circuit, builder.r_wires[i * l : (i + 1) * l] + builder.w_wires[i * n : (i + 1) * n])
        for i in range(t)
    ]
    name = _repeat_name(p, f"^{t}")
    circuit = builder.build(builder.all_of(copies), name=name)
    target = p.soundness_target**t if p.soundness_target is not None else None
    return AmProtocol(
        name=name,
        circuit=circuit,
        label=p.label,
        soundness_target=target,
        perfect_completeness=p.perfect_completeness,
        provenance={**p.provenance, "amplifier": "parallel", "t": str(t), "base": p.name},
    )


def expander_repeat(p: AmProtocol, g: ExpanderGraph, t: int) -> AmProtocol:
    """EXPERIMENTAL: challenges are the t vertices of one walk on g, responses stay independent.

    Vertex v of g is read as the challenge with bits of v, so |V| must equal 2^l.
    """
    if t < 1:
        raise ValueError(f"t must be positive, got {t}")
    if g.n_vertices != 1 << p.l:
        raise ValueError(f"challenge space 2^{p.l} does not embed in {g.name} with {g.n_vertices} vertices")
    if t == 1:
        return p
    n = p.n
    seed_len = walk_seed_length(g, t)
    builder = CircuitBuilder(seed_len, t * n)
    walk = walk_wires(builder, g, builder.r_wires, t)
    copies = [builder.embed(p.circuit, vertex + builder.w_wires[i * n : (i + 1) * n]) for i, vertex in enumerate(walk)]
    name = _repeat_name(p, f"~{g.name}^{t}")
    circuit = builder.build(builder.all_of(copies), name=name)
    logger.debug("expander repetition of %s: seed %d bits vs %d for parallel", p.name, seed_len, t * p.l)
    return AmProtocol(
        name=name,
        circuit=circuit,
        label=p.label,
        soundness_target=None,
        perfect_completeness=p.perfect_completeness,
        provenance={**p.provenance, "amplifier": "expander", "t": str(t), "graph": g.name, "base": p.name, "experimental": "true"},
    )


def amplify(p: AmProtocol, t: int, amplifier: str = "parallel", *, graph: ExpanderGraph | None = None, seed: int = 0) -> AmProtocol:
    if amplifier == "parallel":
        return parallel_repeat(p, t)
    if amplifier == "expander":
        return expander_repeat(p, graph or default_graph(p.l, seed=seed), t)
    raise ValueError(f"unknown amplifier {amplifier!r}; known: {AMPLIFIERS}")


def pad_challenge(p: AmProtocol, l_total: int) -> AmProtocol:
    """Append challenge bits the verifier ignores."""
    if l_total < p.l:
        raise ValueError(f"cannot pad l={p.l} down to {l_total}")
    if l_total == p.l:
        return p
    builder = CircuitBuilder(l_total, p.n)
    out = builder.embed(p.circuit, builder.r_wires[: p.l] + builder.w_wires)
    return dataclasses.replace(
        p,
        circuit=builder.build(out, name=p.circuit.name),
        provenance={**p.provenance, "padded_from": str(p.l)},
    )


# --- corpus --------------------------------------------------------------


def _labelled(name: str, circuit: Circuit, target: Fraction | None, provenance: dict[str, str]) -> AmProtocol:
    soundness = measure_soundness(AmProtocol(name=name, circuit=circuit))
    return AmProtocol(
        name=name,
        circuit=circuit,
        label="YES" if soundness == 1 else "NO",
        soundness_target=target if target is not None else soundness,
        provenance=provenance,
    )


def secret_protocol(l: int, fixed: int, secret: int = 0, *, n_w: int = 1, name: str = "") -> AmProtocol:
    """M(r, w) = [the first `fixed` bits of r spell `secret`]; soundness 2^-fixed.

    The response is ignored; fixed = 0 gives M = 1.
    """
    if not 0 <= fixed <= l:
        raise ValueError(f"fixed must lie in [0, {l}], got {fixed}")
    if n_w < 1:
        raise ValueError(f"n_w must be positive, got {n_w}")
    builder = CircuitBuilder(l, n_w)
    accept = builder.equals_bits(builder.r_wires[:fixed], int_to_bits(secret, fixed))
    name = name or f"secret-l{l}-f{fixed}"
    circuit = builder.build(accept, name=name)
    return _labelled(name, circuit, Fraction(1, 1 << fixed), {"family": "secret"})


def set_size_protocol(language: ToyLanguage, l: int, *, upper: bool = False, name: str = "") -> AmProtocol:
    """Merlin names x in S whose first l bits equal r; covers every r only if |S| >= 2^l.

    With `upper` the set is the complement of S, turning the claim |S| >= 2^l
    into |{0,1}^n \\ S| >= 2^l.
    """
    n = language.block_len
    if not 1 <= l <= n:
        raise ValueError(f"l must lie in [1, {n}], got {l}")
    table = [int(m) ^ int(upper) for m in language.members]
    builder = CircuitBuilder(l, n)
    member = builder.lookup(builder.w_wires, table)
    prefix = builder.all_of(builder.eq(builder.r(j), builder.w(j)) for j in range(l))
    kind = "upper" if upper else "lower"
    name = name or f"setsize-{kind}-{language.description.split()[0].lower()}-n{n}-l{l}"
    circuit = builder.build(builder.and_(member, prefix), name=name)
    size = sum(table)
    return _labelled(name, circuit, Fraction(min(size, 1 << l), 1 << l), {"family": f"setsize-{kind}"})


def planted_protocol(l: int, n: int, satisfiable: int, seed: int, *, name: str = "") -> AmProtocol:
    """A random table verifier with exactly `satisfiable` challenges, each with one planted response."""
    if not 0 <= satisfiable <= 1 << l:
        raise ValueError(f"satisfiable must lie in [0, 2^{l}], got {satisfiable}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    table = np.zeros(1 << (l + n), dtype=int)
    for r in rng.choice(1 << l, size=satisfiable, replace=False):
        table[(int(r) << n) | int(rng.integers(1 << n))] = 1
    builder = CircuitBuilder(l, n)
    name = name or f"planted-l{l}-n{n}-s{satisfiable}-{seed}"
    circuit = builder.build(builder.lookup(builder.r_wires + builder.w_wires, table.tolist()), name=name)
    return _labelled(name, circuit, Fraction(satisfiable, 1 << l), {"family": "planted", "seed": str(seed)})


def default_corpus(seed: int = 0) -> list[AmProtocol]:
    """Small YES and NO instances from every family; every l is at most 4."""
    dense = language_from_predicate(4, "RANDOM", seed=seed, density=Fraction(3, 4))
    sparse = language_from_predicate(4, "RANDOM", seed=seed + 1, density=Fraction(1, 8))
    return [
        secret_protocol(3, 0, name="always"),
        secret_protocol(3, 1, secret=1, name="secret-half"),
        secret_protocol(4, 2, secret=2, name="secret-quarter"),
        set_size_protocol(language_from_predicate(4, "ALL"), 3, name="setsize-full"),
        set_size_protocol(sparse, 3, name="setsize-sparse"),
        set_size_protocol(dense, 2, upper=True, name="setsize-upper"),
        planted_protocol(3, 2, 8, seed, name="planted-full"),
        planted_protocol(3, 2, 2, seed, name="planted-quarter"),
    ]


def format_corpus(entries: list[tuple[AmProtocol, str]]) -> str:
    lines = ["# id circuit label l N"]
    for p, path in entries:
        if p.label is None:
            raise ValueError(f"protocol {p.name} carries no YES/NO label")
        lines.append(f"{p.name} {path} {p.label} {p.l} {p.n}")
    return "\n".join(lines) + "\n"


def write_corpus(path: str | Path, protocols: list[AmProtocol]) -> None:
    """Write the corpus file plus one `<id>.circuit` file per protocol beside it."""
    path = Path(path)
    entries = []
    for p in protocols:
        circuit_path = path.with_name(f"{p.name}.circuit")
        write_circuit(circuit_path, p.circuit)
        entries.append((p, circuit_path.name))
    path.write_text(format_corpus(entries), encoding="utf-8")


def read_corpus(path: str | Path) -> list[AmProtocol]:
    path = Path(path)
    source = str(path)
    protocols = []
    seen: set[str] = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise FormatError("expected '<id> <circuit-path> <YES|NO> <l> <N>'", lineno=lineno, source=source)
        name, circuit_ref, label, l_text, n_text = fields
        if label not in LABELS:
            raise FormatError(f"label must be YES or NO, got {label!r}", lineno=lineno, source=source)
        if name in seen:
            raise FormatError(f"duplicate instance id {name!r}", lineno=lineno, source=source)
        try:
            l, n = int(l_text), int(n_text)
        except ValueError:
            raise FormatError("l and N must be integers", lineno=lineno, source=source) from None
        circuit = read_circuit(path.parent / circuit_ref)
        if (circuit.n_r, circuit.n_w) != (l, n):
            raise FormatError(
                f"circuit {circuit_ref} has l={circuit.n_r} N={circuit.n_w}, corpus says l={l} N={n}",
                lineno=lineno,
                source=source,
            )
        seen.add(name)
        protocols.append(AmProtocol(name=name, circuit=circuit, label=label, provenance={"corpus": source}))
    return protocols


# --- pipeline ------------------------------------------------------------


def theorem1_pipeline(
    p: AmProtocol,
    t: int,
    code: CodeSpec | str,
    backend: str = "enumerative",
    epsilon: Fraction | float = Fraction(1, 2),
    *,
    amplifier: str = "parallel",
    graph: ExpanderGraph | None = None,
    pad_to: int = 0,
    u_alphabet: int = DEFAULT_U_ALPHABET,
    limit_witness: int = DEFAULT_LIMIT_WITNESS,
) -> ReductionOutput:
    """Amplify M_x, then reduce the verifier circuit to a stochastic 2-CSP."""
    amplified = amplify(p, t, amplifier, graph=graph)
    amplified = pad_challenge(amplified, max(pad_to, amplified.l))
    logger.info("pipeline %s: %s t=%d, l=%d N=%d", p.name, amplifier, t, amplified.l, amplified.n)
    out = build_stochastic_csp(
        amplified.circuit, code, backend, epsilon, u_alphabet=u_alphabet, limit_witness=limit_witness
    )
    provenance = {
        **out.provenance,
        "protocol": p.name,
        "amplifier": amplifier,
        "t": str(t),
        "experimental": str(amplified.experimental).lower(),
    }
    return dataclasses.replace(out, provenance=provenance)


@dataclass(frozen=True, slots=True)
class PipelineReport:
    protocol: str
    label: str | None
    amplifier: str
    t: int
    l_base: int
    l: int
    soundness: Fraction
    amplified_soundness: Fraction
    d_meas: float
    alpha: Fraction
    k: int
    c_meas: Fraction | float
    epsilon_meas: Fraction | float
    frac_full: float
    frac_above: float
    bound: float
    verdict: Verdict

    @property
    def holds(self) -> bool:
        """YES: every r fully satisfiable. NO: NO-side fraction within the counting bound."""
        if self.label == "YES":
            return self.frac_full == 1.0
        return self.frac_above <= self.bound or math.isclose(self.frac_above, self.bound, rel_tol=BOUND_RTOL)


def choose_alpha(d: float) -> Fraction:
    """Largest i/64 <= 1/2 with H(alpha) < 1/D."""
    if math.isinf(d):
        return Fraction(0)
    for i in range(ALPHA_GRID // 2, -1, -1):
        alpha = Fraction(i, ALPHA_GRID)
        if d == 0 or entropy(alpha) < 1 / d:
            return alpha
    return Fraction(0)


def counting_bound(l: int, k: int, d: float) -> float:
    """V_{l,k} * 2^{(1 - 1/D) l} / 2^l."""
    if d == 0:
        return 0.0
    if math.isinf(d):
        return 1.0
    return min(1.0, sphere_volume(l, k) * 2.0 ** (-l / d))


def pipeline_report(
    p: AmProtocol,
    out: ReductionOutput,
    *,
    s: Fraction | float = Fraction(1, 2),
    workers: int = 1,
    limit_witness: int = DEFAULT_LIMIT_WITNESS,
) -> PipelineReport:
    """Measured D, alpha, c_meas and the NO-side count against the counting bound."""
    soundness = measure_soundness(p, limit_witness=limit_witness)
    amplified = AmProtocol(name=out.circuit.name, circuit=out.circuit)
    s_amp = measure_soundness(amplified, limit_witness=limit_witness)
    l = out.l
    if s_amp >= 1:
        d_meas = math.inf
    elif s_amp == 0:
        d_meas = 0.0
    else:
        d_meas = l / math.log2(1 / s_amp)
    alpha = choose_alpha(d_meas)
    k = math.floor(alpha * l)

    report = soundness_report(out, workers=workers, limit_witness=limit_witness)
    records = tuple((r, value) for r, _, value in report.records)
    profile = GapProfile(n_arthur=l, m=out.psi.m, records=records, exhaustive=True)
    if s_amp == 0:
        # no satisfiable challenge: nothing may exceed the unsatisfiable deficit
        epsilon_meas: Fraction | float = report.unsat_deficit if report.unsat_deficit is not None else Fraction(0)
    elif math.isinf(report.c_meas):
        epsilon_meas = out.params.epsilon
    else:
        epsilon_meas = report.c_meas * (k + 1) / l
    frac_above = profile.frac_above(epsilon_meas)
    verdict = classify_promise(profile, out.params.epsilon, s)
    result = PipelineReport(
        protocol=p.name,
        label=p.label,
        amplifier=out.provenance.get("amplifier", "parallel"),
        t=int(out.provenance.get("t", "1")),
        l_base=p.l,
        l=l,
        soundness=Fraction(soundness),
        amplified_soundness=Fraction(s_amp),
        d_meas=d_meas,
        alpha=alpha,
        k=k,
        c_meas=report.c_meas,
        epsilon_meas=epsilon_meas,
        frac_full=profile.frac_full,
        frac_above=frac_above,
        bound=counting_bound(l, k, d_meas),
        verdict=verdict,
    )
    logger.info(
        "pipeline %s: verdict=%s D=%.3f alpha=%s fraction=%.4f bound=%.4f",
        p.name, verdict.value, d_meas, alpha, frac_above, result.bound,
    )
    return result
