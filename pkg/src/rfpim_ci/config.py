"""Experiment configuration and its strict JSON parser.

Every key is optional; omitted keys take the desk-scale defaults below.
Unknown keys are rejected (with a close-match suggestion) so a typo never
silently falls back to a default.
"""

from __future__ import annotations

import difflib
import hashlib
import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from .forest import ForestConfig
from .imputation import ImputerConfig
from .missingness import DEFAULT_COND_FEATURE, Mechanism
from .simgen import GENERATORS, arity


class ConfigError(ValueError):
    pass


class Method(str, Enum):
    NONE = "NONE"
    SINGLE_PMM = "SINGLE_PMM"
    SINGLE_RF = "SINGLE_RF"
    RUBIN_PMM = "RUBIN_PMM"


ALL_METHODS = (Method.NONE, Method.SINGLE_PMM, Method.SINGLE_RF, Method.RUBIN_PMM)


@dataclass(frozen=True)
class ExperimentConfig:
    generator: int = 1
    n: int = 250
    p: int = 20
    mechanism: Mechanism = Mechanism.MCAR
    rate: float = 0.1
    cond_feature: int = DEFAULT_COND_FEATURE  # 0-based
    methods: tuple[Method, ...] = ALL_METHODS
    n_sim: int = 200
    alpha: float = 0.05
    forest: ForestConfig = field(default_factory=lambda: ForestConfig(ntree=100, nodesize=5))
    imputer: ImputerConfig = field(default_factory=ImputerConfig)
    K: int = 50
    b: int | None = None
    ground_truth_reps: int = 200
    n_ref: int = 250
    benchmark_repetitions: int = 100
    benchmark_rate: float = 0.1
    master_seed: int = 2025

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        self.validate()

    def validate(self) -> None:
        if self.generator not in GENERATORS:
            raise ConfigError(f"generator must be in 1..12, got {self.generator}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.p < max(1, arity(self.generator)):
            raise ConfigError(f"p={self.p} too small for generator {self.generator}")
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"rate must lie in [0, 1), got {self.rate}")
        if not 0 <= self.cond_feature < self.p:
            raise ConfigError(f"cond_feature out of range 1..{self.p}")
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods contains duplicates")
        if self.n_sim < 1:
            raise ConfigError(f"n_sim must be >= 1, got {self.n_sim}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.b is not None and not 2 <= self.b < self.n:
            raise ConfigError(f"b must satisfy 2 <= b < n, got {self.b}")
        if self.ground_truth_reps < 1 or self.n_ref < 2:
            raise ConfigError("ground_truth reps must be >= 1 and n_ref >= 2")
        if self.benchmark_repetitions < 1:
            raise ConfigError("benchmark repetitions must be >= 1")
        if not 0.0 <= self.benchmark_rate < 1.0:
            raise ConfigError(f"benchmark rate must lie in [0, 1), got {self.benchmark_rate}")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def forest_digest(cfg: ForestConfig) -> str:
    """Hash of the forest settings that shape the estimator (seed excluded)."""
    d = {k: v for k, v in asdict(cfg).items() if k != "seed"}
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


# key -> (type check, converter); nested sections map onto sub-configs
_TOP = {
    "generator": int,
    "n": int,
    "p": int,
    "mechanism": str,
    "rate": float,
    "cond_feature": int,
    "methods": list,
    "n_sim": int,
    "alpha": float,
    "master_seed": int,
}
_SECTIONS = {
    "forest": {"ntree": int, "mtry": (int, type(None)), "nodesize": int, "sample_with_replacement": bool},
    "imputer": {
        "R": int,
        "maxit": (int, type(None)),
        "pmm_k": int,
        "rf_trees": int,
        "rf_nodesize": int,
        "include_response": bool,
    },
    "jackknife": {"K": int, "b": (int, type(None))},
    "ground_truth": {"reps": int, "n_ref": int},
    "benchmark": {"repetitions": int, "rate": float},
}
_ALL_KEYS = sorted(set(_TOP) | set(_SECTIONS) | {k for s in _SECTIONS.values() for k in s})


def _unknown(key: str, where: str, allowed) -> ConfigError:
    close = difflib.get_close_matches(key, list(allowed) + _ALL_KEYS, n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return ConfigError(f"unknown key {key!r} in {where}{hint}")


def _typed(key, value, expected):
    types = expected if isinstance(expected, tuple) else (expected,)
    # bools are ints in Python; keep them apart
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{key}: expected {types[0].__name__}, got bool")
    if float in types and isinstance(value, int):
        return float(value)
    if not isinstance(value, types):
        raise ConfigError(f"{key}: expected {types[0].__name__}, got {type(value).__name__}")
    return value


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    kw: dict = {}
    sections: dict[str, dict] = {}
    for key, value in raw.items():
        if key in _TOP:
            kw[key] = _typed(key, value, _TOP[key])
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            for sub, v in value.items():
                if sub not in _SECTIONS[key]:
                    raise _unknown(sub, f"section {key!r}", _SECTIONS[key])
                sections.setdefault(key, {})[sub] = _typed(f"{key}.{sub}", v, _SECTIONS[key][sub])
        else:
            raise _unknown(key, "the top level", list(_TOP) + list(_SECTIONS))

    try:
        if "mechanism" in kw:
            kw["mechanism"] = Mechanism(kw["mechanism"].upper())
        if "methods" in kw:
            kw["methods"] = tuple(Method(str(m).upper()) for m in kw["methods"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "cond_feature" in kw:
        kw["cond_feature"] -= 1  # 1-based in files
    try:
        if "forest" in sections:
            kw["forest"] = ForestConfig(**{"ntree": 100, "nodesize": 5, **sections["forest"]})
        if "imputer" in sections:
            kw["imputer"] = ImputerConfig(**sections["imputer"])
        jk = sections.get("jackknife", {})
        if "K" in jk:
            kw["K"] = jk["K"]
        if "b" in jk:
            kw["b"] = jk["b"]
        gt = sections.get("ground_truth", {})
        if "reps" in gt:
            kw["ground_truth_reps"] = gt["reps"]
        if "n_ref" in gt:
            kw["n_ref"] = gt["n_ref"]
        bm = sections.get("benchmark", {})
        if "repetitions" in bm:
            kw["benchmark_repetitions"] = bm["repetitions"]
        if "rate" in bm:
            kw["benchmark_rate"] = bm["rate"]
        return ExperimentConfig(**kw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    text = path.read_text()
    if not text.strip():
        return ExperimentConfig()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return config_from_dict(raw)


def config_to_json(cfg: ExperimentConfig) -> dict:
    """The file-format view of ``cfg`` (round-trips through ``config_from_dict``)."""
    return {
        "generator": cfg.generator,
        "n": cfg.n,
        "p": cfg.p,
        "mechanism": cfg.mechanism.value,
        "rate": cfg.rate,
        "cond_feature": cfg.cond_feature + 1,
        "methods": [m.value for m in cfg.methods],
        "n_sim": cfg.n_sim,
        "alpha": cfg.alpha,
        "master_seed": cfg.master_seed,
        "forest": {
            "ntree": cfg.forest.ntree,
            "mtry": cfg.forest.mtry,
            "nodesize": cfg.forest.nodesize,
            "sample_with_replacement": cfg.forest.sample_with_replacement,
        },
        "imputer": {
            "R": cfg.imputer.R,
            "maxit": cfg.imputer.maxit,
            "pmm_k": cfg.imputer.pmm_k,
            "rf_trees": cfg.imputer.rf_trees,
            "rf_nodesize": cfg.imputer.rf_nodesize,
            "include_response": cfg.imputer.include_response,
        },
        "jackknife": {"K": cfg.K, "b": cfg.b},
        "ground_truth": {"reps": cfg.ground_truth_reps, "n_ref": cfg.n_ref},
        "benchmark": {"repetitions": cfg.benchmark_repetitions, "rate": cfg.benchmark_rate},
    }
