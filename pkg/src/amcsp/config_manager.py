from __future__ import annotations

import dataclasses
import tomllib
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional

from .codes import CODE_BACKENDS
from .generator import KPRIME_FAMILIES
from .pcpp import PCPP_BACKENDS
from .protocol import AMPLIFIERS


PROJECT_ROOT = Path(__file__).resolve().parents[2]
CONFIG_PATH = PROJECT_ROOT / "config.toml"

MAX_SEED = (1 << 64) - 1
_FRACTION_FIELDS = ("epsilon", "concentrate_density", "guess_alpha", "pipeline_s", "walk_density")


@dataclass(kw_only=True, slots=True)
class ExperimentConfig:
    seed: int = 1
    trials: int = 10_000
    workers: int = 1
    limit_arthur: int = 20
    limit_witness: int = 24
    limit_merlin: int = 1 << 20
    limit_pcpp_inputs: int = 16
    limit_spectral: int = 1 << 14
    epsilon: Fraction = Fraction(1, 2)
    backend: str = "enumerative"
    code: str = "rs"
    u_alphabet: int = 3
    walk_graph_m: int = 9
    walk_epsilons: List[float] = field(default_factory=lambda: [0.1, 0.2, 0.3])
    walk_lengths: List[int] = field(default_factory=lambda: [16, 64])
    walk_density: Fraction = Fraction(1, 2)
    concentrate_block_len: int = 6
    concentrate_k: int = 64
    concentrate_delta: float = 0.25
    concentrate_families: List[str] = field(default_factory=lambda: list(KPRIME_FAMILIES))
    concentrate_density: Fraction = Fraction(1, 2)
    conditional_samples: int = 16
    amplify_ts: List[int] = field(default_factory=lambda: [2, 4, 8])
    pipeline_t: int = 2
    pipeline_amplifier: str = "parallel"
    pipeline_corpus: Optional[str] = None
    pipeline_s: Fraction = Fraction(1, 2)
    guess_k: int = 16
    guess_alpha: Fraction = Fraction(1, 4)
    guess_accepted: List[int] = field(default_factory=lambda: [0, 1, 2, 3])
    guess_target: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    out: str = "reports"
    # hardness parameters the toy instances cannot instantiate; echoed in reports only
    labels: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        merged: Dict[str, Any] = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")

        for name in _FRACTION_FIELDS:
            if name in merged:
                merged[name] = _to_fraction(name, merged[name])
        if "labels" in merged:
            merged["labels"] = {str(k): str(v) for k, v in (merged["labels"] or {}).items()}
        for name in ("backend", "code", "pipeline_amplifier"):
            if name in merged:
                merged[name] = str(merged[name]).lower()
        if "concentrate_families" in merged:
            merged["concentrate_families"] = [str(f).lower() for f in merged["concentrate_families"]]
        if merged.get("pipeline_corpus") == "":
            merged["pipeline_corpus"] = None

        return cls(**merged)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        for name in _FRACTION_FIELDS:
            payload[name] = str(payload[name])
        payload["labels"] = dict(self.labels)
        return payload

    def validate(self) -> None:
        if not 0 <= self.seed <= MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

        if self.trials < 0:
            raise ValueError(f"trials must be non-negative, got {self.trials}")

        if self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")

        for name in ("limit_arthur", "limit_witness", "limit_merlin", "limit_pcpp_inputs", "limit_spectral"):
            value = getattr(self, name)
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")

        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")

        if self.backend not in PCPP_BACKENDS:
            raise ValueError(f"backend must be one of {sorted(PCPP_BACKENDS)}, got {self.backend!r}")

        if self.code not in CODE_BACKENDS:
            raise ValueError(f"code must be one of {sorted(CODE_BACKENDS)}, got {self.code!r}")

        if self.u_alphabet < 2:
            raise ValueError(f"u_alphabet must be at least 2, got {self.u_alphabet}")

        if self.walk_graph_m < 2:
            raise ValueError(f"walk_graph_m must be at least 2, got {self.walk_graph_m}")

        if any(not 0 < e <= 1 for e in self.walk_epsilons):
            raise ValueError(f"walk_epsilons must lie in (0, 1], got {self.walk_epsilons}")

        if any(m < 1 for m in self.walk_lengths):
            raise ValueError(f"walk_lengths must be positive, got {self.walk_lengths}")

        for name in ("walk_density", "concentrate_density"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

        if self.concentrate_block_len < 1 or self.concentrate_k < 1:
            raise ValueError(
                f"concentrate_block_len and concentrate_k must be positive, got {self.concentrate_block_len}, {self.concentrate_k}"
            )

        if not 0 < self.concentrate_delta <= 1:
            raise ValueError(f"concentrate_delta must lie in (0, 1], got {self.concentrate_delta}")

        bad = [f for f in self.concentrate_families if f not in KPRIME_FAMILIES]
        if bad:
            raise ValueError(f"concentrate_families must be drawn from {KPRIME_FAMILIES}, got {bad}")

        if self.conditional_samples < 0:
            raise ValueError(f"conditional_samples must be non-negative, got {self.conditional_samples}")

        if any(t < 1 for t in self.amplify_ts) or self.pipeline_t < 1:
            raise ValueError(f"repetition counts must be positive, got {self.amplify_ts} and {self.pipeline_t}")

        if self.pipeline_amplifier not in AMPLIFIERS:
            raise ValueError(f"pipeline_amplifier must be one of {AMPLIFIERS}, got {self.pipeline_amplifier!r}")

        if self.pipeline_corpus and not Path(self.pipeline_corpus).is_file():
            raise ValueError(f"pipeline_corpus does not exist: {self.pipeline_corpus}")

        if not 0 <= self.pipeline_s < 1:
            raise ValueError(f"pipeline_s must lie in [0, 1), got {self.pipeline_s}")

        if self.guess_k < 1:
            raise ValueError(f"guess_k must be positive, got {self.guess_k}")

        if self.guess_alpha <= 0:
            raise ValueError(f"guess_alpha must be positive, got {self.guess_alpha}")

        for name in ("guess_accepted", "guess_target"):
            if any(not 0 <= i < self.guess_k for i in getattr(self, name)):
                raise ValueError(f"{name} must hold indices in [0, {self.guess_k})")

        if not self.out:
            raise ValueError("out must name an output directory")

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with the non-None overrides applied, validated."""
        updated = dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})
        updated.validate()
        return updated


def _to_fraction(name: str, value: Any) -> Fraction:
    try:
        return Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"{name} must be a rational such as 1/2 or 0.25, got {value!r}") from None


class ConfigManager:
    def __init__(self, config_path: Optional[Path] = None) -> None:
        self._config_path = Path(config_path) if config_path is not None else CONFIG_PATH

    @property
    def config_path(self) -> Path:
        return self._config_path

    def ensure_exists(self) -> None:
        if not self._config_path.exists():
            raise FileNotFoundError(f"Config file not found at {self._config_path}")

    def load(self, *, missing_ok: bool = False) -> ExperimentConfig:
        if missing_ok and not self._config_path.exists():
            config = ExperimentConfig()
            config.validate()
            return config
        self.ensure_exists()
        with self._config_path.open("rb") as handle:
            data = tomllib.load(handle)
        config = ExperimentConfig.from_dict(data)
        config.validate()
        return config
