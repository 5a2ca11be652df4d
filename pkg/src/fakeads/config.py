"""Pipeline configuration loaded from TOML.

Example::

    seed = 7
    [paths]
    corpus = "data/corpus.jsonl"
    gazetteer = "data/gazetteer.csv"
    labels = "data/labels.csv"
    out = "runs/seed7"
    [split]
    test_fraction = 0.2
    [stack]
    roster = ["gbdt", "mlp"]
    [stack.hyperparameters.gbdt]
    learning_rate = 0.1

Relative paths are resolved against the directory of the config file.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import learners as L
from .clean import DedupConfig, FeatureRanges
from .ensemble import StackConfig
from .eval import ABLATION_ORDER
from .featurize import FeaturizerConfig
from .synth import ConfigError, SynthConfig


@dataclass
class Paths:
    corpus: str | None = None
    gazetteer: str | None = None
    labels: str | None = None
    out: str = "out"
    rules: str | None = None  # extraction rule set; None = packaged defaults

    def require(self, *names):
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"paths.{name} is not set")
            if not Path(value).exists():
                raise FileNotFoundError(f"paths.{name}: {value} does not exist")


@dataclass
class SplitConfig:
    train_fraction: float = 0.8
    test_fraction: float = 0.2

    def __post_init__(self):
        if abs(self.train_fraction + self.test_fraction - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must be in (0, 1)")


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: Paths = field(default_factory=Paths)
    synth: SynthConfig = field(default_factory=SynthConfig)
    ranges: FeatureRanges = field(default_factory=FeatureRanges)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    featurizer: FeaturizerConfig = field(default_factory=FeaturizerConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    roster: tuple = tuple(L.PRESETS)
    hyperparameters: dict = field(default_factory=dict)  # preset name -> overrides
    validation_fraction: float = 0.10
    selection_iterations: int = 100
    n_folds: int = 5
    selection_metric: str = "accuracy"
    ablation: bool = False
    ablation_order: tuple = ABLATION_ORDER

    def with_seed(self, seed: int) -> "PipelineConfig":
        seed = int(seed)
        return replace(self, seed=seed, synth=replace(self.synth, seed=seed),
                       featurizer=replace(self.featurizer, seed=seed))

    def stack_config(self, seed: int | None = None) -> StackConfig:
        seed = self.seed if seed is None else seed
        roster = []
        for name in self.roster:
            spec = L.preset(name, seed)
            extra = self.hyperparameters.get(name)
            if extra:
                spec = replace(spec, hyperparameters={**spec.hyperparameters, **extra})
            roster.append(spec)
        return StackConfig(roster, self.validation_fraction, self.selection_iterations, self.n_folds,
                           self.selection_metric, seed)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["roster"] = list(self.roster)
        d["ablation_order"] = list(self.ablation_order)
        return d

    def fingerprint(self) -> str:
        """sha256 of the canonical JSON form (paths excluded)."""
        d = self.as_dict()
        d.pop("paths")
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self):
        self.synth.validate()
        self.stack_config()
        bad = set(self.ablation_order) - {"spatial", "refined", "basic"}
        if bad:
            raise ConfigError(f"unknown feature sets in ablation_order: {sorted(bad)}")
        return self


def _build(cls, raw: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"[{where}] unknown keys {sorted(unknown)}")
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    try:
        return cls(**vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def from_dict(raw: dict, base_dir: Path | None = None) -> PipelineConfig:
    raw = dict(raw)
    cfg = PipelineConfig()
    seed = raw.pop("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    paths = dict(raw.pop("paths", {}))
    for k, v in paths.items():
        if isinstance(v, str) and base_dir is not None and not Path(v).is_absolute():
            paths[k] = str(base_dir / v)
    cfg.paths = _build(Paths, paths, "paths")
    synth = dict(raw.pop("synth", {}))
    synth.setdefault("seed", seed)
    cfg.synth = _build(SynthConfig, synth, "synth")
    cfg.ranges = _build(FeatureRanges, raw.pop("ranges", {}), "ranges")
    cfg.dedup = _build(DedupConfig, raw.pop("dedup", {}), "dedup")
    feat = dict(raw.pop("featurizer", {}))
    feat.setdefault("seed", seed)
    cfg.featurizer = _build(FeaturizerConfig, feat, "featurizer")
    cfg.split = _build(SplitConfig, raw.pop("split", {}), "split")
    stack = dict(raw.pop("stack", {}))
    if "roster" in stack:
        cfg.roster = tuple(stack.pop("roster"))
        unknown = [n for n in cfg.roster if n not in L.PRESETS]
        if unknown:
            raise ConfigError(f"[stack] unknown presets {unknown}; known: {list(L.PRESETS)}")
    cfg.hyperparameters = {k: dict(v) for k, v in stack.pop("hyperparameters", {}).items()}
    for key in ("validation_fraction", "selection_iterations", "n_folds", "selection_metric"):
        if key in stack:
            setattr(cfg, key, stack.pop(key))
    if stack:
        raise ConfigError(f"[stack] unknown keys {sorted(stack)}")
    abl = dict(raw.pop("ablation", {}))
    cfg.ablation = bool(abl.pop("enabled", False))
    if "order" in abl:
        cfg.ablation_order = tuple(abl.pop("order"))
    if abl:
        raise ConfigError(f"[ablation] unknown keys {sorted(abl)}")
    if raw:
        raise ConfigError(f"unknown top-level keys {sorted(raw)}")
    cfg.seed = seed
    try:
        return cfg.validate()
    except (ValueError, L.SpecError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(raw, path.parent)
