from __future__ import annotations

import argparse
import contextlib
import logging
import platform
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from rich.console import Console

from . import __version__
from .circuits import read_circuit
from .config_manager import ConfigManager, ExperimentConfig
from .csp import EXHAUSTIVE, Sampled, classify_promise, gap_profile, read_csp, write_csp
from .errors import LimitExceededError
from .expander import (
    build_graph,
    chernoff_bound,
    empirical_deviation,
    is_bipartite,
    is_connected,
    random_indicators,
    second_eigenvalue,
)
from .generator import concentration_experiment, language_from_predicate, make_spec, subset_guess_experiment
from .hamming import format_bits, int_to_bits
from .logger import console_for, get_logger
from .parallel import shard_seeds
from .protocol import (
    AmProtocol,
    amplify as amplify_protocol,
    default_corpus,
    measure_soundness,
    pipeline_report,
    read_corpus,
    theorem1_pipeline,
)
from .reduction import build_stochastic_csp
from .reports import Report, format_summary, write_report

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_LIMIT = 3
SIGMAS = 3


@contextlib.contextmanager
def _status(console: Console, message: str) -> Iterator[None]:
    spinner = "dots" if console.encoding == "utf-8" else "line"
    with console.status(f"[bold green]{message}[/bold green]", spinner=spinner):
        yield


class Runner:
    def __init__(self, config: ExperimentConfig, *, logger: logging.Logger) -> None:
        self.config = config
        self.logger = logger
        self.console = console_for(logger)

    def _report(self, command: str, columns: Sequence[str]) -> Report:
        return Report(command=command, columns=columns, config=self.config.to_dict(), seed=self.config.seed)

    def _emit(self, report: Report) -> None:
        write_report(self.config.out, report)
        print(format_summary(report.summary), end="")

    def _corpus(self) -> list[AmProtocol]:
        if self.config.pipeline_corpus:
            return read_corpus(self.config.pipeline_corpus)
        return default_corpus(self.config.seed)

    # --- commands ---------------------------------------------------------

    def reduce(self, circuit_path: Path, output: Optional[Path]) -> None:
        circuit = read_circuit(circuit_path)
        cfg = self.config
        with _status(self.console, f"Reducing {circuit_path.name}..."):
            out = build_stochastic_csp(
                circuit, cfg.code, cfg.backend, cfg.epsilon, u_alphabet=cfg.u_alphabet, limit_witness=cfg.limit_witness
            )
        target = output or Path(cfg.out) / f"{circuit_path.stem}.csp"
        target.parent.mkdir(parents=True, exist_ok=True)
        write_csp(target, out.psi)
        self.logger.info("Wrote %s", target)
        summary = {
            "l": out.l,
            "N": circuit.n_w,
            "N_prime": out.code.n_prime,
            "b": out.params.b,
            "gamma": out.params.gamma,
            "nu": out.params.nu,
            "m": out.psi.m,
            "csp": target,
        }
        print(format_summary(summary), end="")

    def gamevalue(self, csp_path: Path, mode: str, s: Fraction) -> None:
        if not 0 <= s < 1:
            raise ValueError(f"--s must lie in [0, 1), got {s}")
        cfg = self.config
        csp = read_csp(csp_path)
        sweep = EXHAUSTIVE if mode == "exhaustive" else Sampled(trials=cfg.trials, seed=cfg.seed)
        with _status(self.console, f"Profiling {csp_path.name}..."):
            profile = gap_profile(csp, sweep, limit_arthur=cfg.limit_arthur, limit_merlin=cfg.limit_merlin, workers=cfg.workers)
        verdict = classify_promise(profile, cfg.epsilon, s)
        report = self._report("gamevalue", ["r", "max_val"])
        for r, value in profile.records:
            report.add_row(format_bits(int_to_bits(r, csp.n_arthur)), value)
        above = profile.frac_above(cfg.epsilon)
        report.summary = {
            "csp": csp_path,
            "mode": mode,
            "count": profile.count,
            "m": profile.m,
            "frac_full": profile.frac_full,
            "frac_above": above,
            "stderr": profile.stderr(above),
            "min_value": profile.min_value,
            "epsilon": cfg.epsilon,
            "s": s,
            "verdict": verdict,
        }
        self._emit(report)

    def walk(self) -> None:
        cfg = self.config
        graph = build_graph("margulis", m=cfg.walk_graph_m)
        with _status(self.console, f"Estimating lambda for {graph.name}..."):
            lam = second_eigenvalue(graph, limit=cfg.limit_spectral, seed=cfg.seed)
        connected, bipartite = is_connected(graph), is_bipartite(graph)
        self.logger.info("%s: lambda=%.6f connected=%s bipartite=%s", graph.name, lam, connected, bipartite)
        report = self._report(
            "walk", ["graph", "lambda", "epsilon", "m", "trials", "hits", "frequency", "stderr", "bound", "within"]
        )
        points = [(e, m) for e in cfg.walk_epsilons for m in cfg.walk_lengths]
        within_all = True
        if cfg.trials:
            seeds = shard_seeds(cfg.seed, len(points))
            with _status(self.console, "Sampling walks..."):
                for (epsilon, m), seed in zip(points, seeds):
                    fs, means = random_indicators(graph, m, float(cfg.walk_density), np.random.default_rng(seed))
                    result = empirical_deviation(graph, fs, means, epsilon, cfg.trials, seed)
                    bound = chernoff_bound(epsilon, lam, m)
                    within = result.frequency <= bound + SIGMAS * result.stderr
                    within_all &= within
                    report.add_row(
                        graph.name, lam, epsilon, m, result.trials, result.hits, result.frequency, result.stderr, bound, within
                    )
        report.summary = {
            "graph": graph.name,
            "lambda": lam,
            "connected": connected,
            "bipartite": bipartite,
            "points": len(report.rows),
            "within_all": within_all,
        }
        self._emit(report)

    def concentrate(self) -> None:
        cfg = self.config
        language = language_from_predicate(
            cfg.concentrate_block_len, "RANDOM", seed=cfg.seed, density=cfg.concentrate_density
        )
        report = self._report(
            "concentrate", ["family", "r_b", "trials", "hits", "frequency", "stderr", "bound", "within"]
        )
        within_all = True
        seeds = shard_seeds(cfg.seed, len(cfg.concentrate_families))
        for family, seed in zip(cfg.concentrate_families, seeds):
            spec = make_spec(cfg.concentrate_block_len, cfg.concentrate_k, family, seed=cfg.seed)
            with _status(self.console, f"Concentration, K' family {family}..."):
                result = concentration_experiment(
                    language,
                    spec,
                    cfg.concentrate_delta,
                    cfg.trials,
                    seed,
                    conditional_samples=cfg.conditional_samples,
                )
            within = result.frequency <= result.bound + SIGMAS * result.stderr
            within_all &= within
            report.add_row(family, "*", result.trials, result.hits, result.frequency, result.stderr, result.bound, within)
            for r_b, trials, hits in result.conditional:
                frequency = hits / trials
                stderr = (frequency * (1 - frequency) / trials) ** 0.5
                within = frequency <= result.bound + SIGMAS * stderr
                within_all &= within
                report.add_row(family, format_bits(r_b), trials, hits, frequency, stderr, result.bound, within)
        report.summary = {
            "block_len": cfg.concentrate_block_len,
            "k": cfg.concentrate_k,
            "delta": cfg.concentrate_delta,
            "density": language.density,
            "within_all": within_all,
        }
        self._emit(report)

    def amplify(self) -> None:
        cfg = self.config
        report = self._report(
            "amplify",
            [
                "protocol", "t", "base_soundness",
                "parallel_seed", "parallel_soundness",
                "expander_seed", "expander_soundness", "experimental",
            ],
        )
        for p in self._corpus():
            if p.label != "NO":
                continue
            base = measure_soundness(p, limit_arthur=cfg.limit_arthur, limit_witness=cfg.limit_witness)
            for t in cfg.amplify_ts:
                if t * p.n > cfg.limit_witness:
                    self.logger.debug("Skipping %s at t=%d: %d witness bits", p.name, t, t * p.n)
                    continue
                parallel = amplify_protocol(p, t, "parallel")
                expander = amplify_protocol(p, t, "expander", seed=cfg.seed)
                report.add_row(
                    p.name, t, base,
                    parallel.l, self._soundness(parallel),
                    expander.l, self._soundness(expander), True,
                )
        report.summary = {"rows": len(report.rows), "expander_repeat": "experimental"}
        self._emit(report)

    def _soundness(self, p: AmProtocol) -> Fraction | float:
        cfg = self.config
        mode = EXHAUSTIVE if p.l <= cfg.limit_arthur else Sampled(trials=cfg.trials, seed=cfg.seed)
        return measure_soundness(p, mode, limit_arthur=cfg.limit_arthur, limit_witness=cfg.limit_witness, workers=cfg.workers)

    def pipeline(self) -> None:
        cfg = self.config
        report = self._report(
            "pipeline",
            [
                "protocol", "label", "amplifier", "t", "l", "soundness", "amplified_soundness",
                "D", "alpha", "k", "c_meas", "epsilon_meas", "frac_full", "frac_above", "bound", "verdict", "holds",
            ],
        )
        summary: dict[str, object] = {"amplifier": cfg.pipeline_amplifier, "t": cfg.pipeline_t}
        if cfg.pipeline_amplifier == "expander":
            summary["experimental"] = True
        holds_all = True
        for p in self._corpus():
            with _status(self.console, f"Pipeline {p.name}..."):
                out = theorem1_pipeline(
                    p,
                    cfg.pipeline_t,
                    cfg.code,
                    cfg.backend,
                    cfg.epsilon,
                    amplifier=cfg.pipeline_amplifier,
                    u_alphabet=cfg.u_alphabet,
                    limit_witness=cfg.limit_witness,
                )
                result = pipeline_report(p, out, s=cfg.pipeline_s, workers=cfg.workers, limit_witness=cfg.limit_witness)
            holds_all &= result.holds
            report.add_row(
                result.protocol, result.label, result.amplifier, result.t, result.l,
                result.soundness, result.amplified_soundness, result.d_meas, result.alpha, result.k,
                result.c_meas, result.epsilon_meas, result.frac_full, result.frac_above, result.bound,
                result.verdict, result.holds,
            )
            summary[f"verdict.{p.name}"] = result.verdict
        summary["holds_all"] = holds_all
        report.summary = summary
        self._emit(report)

    def guess(self) -> None:
        cfg = self.config
        accepted = list(cfg.guess_accepted)
        report = self._report(
            "guess",
            ["scenario", "k", "alpha", "accepted", "target", "trials", "successes", "rate", "stderr", "exact", "floor", "within"],
        )
        scenarios = [("configured", cfg.guess_target)]
        if accepted:
            scenarios.append(("missing-accepted", [i for i in cfg.guess_target if i != accepted[0]]))
        within_all = True
        for (name, target), seed in zip(scenarios, shard_seeds(cfg.seed, len(scenarios))):
            result = subset_guess_experiment(accepted, target, cfg.guess_k, cfg.guess_alpha, cfg.trials, seed)
            if result.exact == 0:
                within = result.successes == 0
            else:
                within = abs(result.rate - float(result.exact)) <= SIGMAS * max(result.stderr, 1 / max(cfg.trials, 1))
            within_all &= within
            report.add_row(
                name, cfg.guess_k, cfg.guess_alpha, accepted, list(target), result.trials, result.successes,
                result.rate, result.stderr, result.exact, result.floor, within,
            )
        report.summary = {"k": cfg.guess_k, "alpha": cfg.guess_alpha, "within_all": within_all}
        self._emit(report)


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Master seed (64-bit)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    common.add_argument("--limit-exhaustive", type=int, dest="limit_arthur", help="Largest l swept exhaustively")
    common.add_argument("--epsilon", type=_fraction, help="Reduction / promise epsilon, e.g. 1/2")
    common.add_argument("--backend", help="Assignment-tester backend id")
    common.add_argument("--code", help="Code backend id")
    common.add_argument("--out", help="Report directory")
    common.add_argument("--workers", type=int, help="Process-pool width for exhaustive sweeps")

    parser = argparse.ArgumentParser(
        prog="amcsp",
        description="Stochastic 2-CSPs from Arthur-Merlin verifiers, with exhaustive and Monte Carlo checks.",
        epilog=(
            "Usage:\n"
            "  amcsp reduce and.circuit               # circuit -> CSP file\n"
            "  amcsp gamevalue reports/and.csp        # gap profile and verdict\n"
            "  amcsp pipeline                          # amplify + reduce the toy corpus"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose debug logging")
    parser.add_argument("--config", type=Path, help="Config file (default: config.toml at the project root)")
    commands = parser.add_subparsers(dest="command", required=True)

    reduce_cmd = commands.add_parser("reduce", parents=[common], help="Reduce a circuit file to a stochastic 2-CSP file")
    reduce_cmd.add_argument("circuit", type=Path)
    reduce_cmd.add_argument("-o", "--output", type=Path, help="CSP file (default: <out>/<circuit>.csp)")

    game = commands.add_parser("gamevalue", parents=[common], help="Gap profile and promise verdict of a CSP file")
    game.add_argument("csp", type=Path)
    game.add_argument("--mode", choices=("exhaustive", "sampled"), default="exhaustive")
    game.add_argument("--s", type=_fraction, default=Fraction(1, 2), help="NO-side threshold in [0, 1)")

    commands.add_parser("walk", parents=[common], help="Expander-walk Chernoff experiment")
    commands.add_parser("concentrate", parents=[common], help="Generator concentration experiment")
    commands.add_parser("amplify", parents=[common], help="Parallel vs expander repetition soundness")
    commands.add_parser("pipeline", parents=[common], help="Amplify and reduce the protocol corpus")
    commands.add_parser("guess", parents=[common], help="Subset-guessing experiment")
    return parser


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    manager = ConfigManager(args.config)
    config = manager.load(missing_ok=args.config is None)
    return config.with_overrides(
        seed=args.seed,
        trials=args.trials,
        limit_arthur=args.limit_arthur,
        epsilon=args.epsilon,
        backend=args.backend.lower() if args.backend else None,
        code=args.code.lower() if args.code else None,
        out=args.out,
        workers=args.workers,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logger = get_logger(level=logging.DEBUG if args.verbose else logging.INFO)
    logger.debug("Environment: platform=%s python=%s", platform.platform(), platform.python_version())
    try:
        config = _load_config(args)
        runner = Runner(config, logger=logger)
        logger.debug("Config: %s", config.to_dict())
        if args.command == "reduce":
            runner.reduce(args.circuit, args.output)
        elif args.command == "gamevalue":
            runner.gamevalue(args.csp, args.mode, args.s)
        else:
            getattr(runner, args.command)()
    except LimitExceededError as exc:
        logger.error("Refused: %s", exc)
        return EXIT_LIMIT
    except (ValueError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
