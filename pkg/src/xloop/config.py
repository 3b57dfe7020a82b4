"""Run configuration: a YAML file mapped onto dataclasses.

Example::

    version: 1
    name: cancer
    seed: 0
    output_dir: runs/cancer
    dataset:
      path: data/cancer.csv          # relative to this file
      schema: {mean radius: numerical, ..., diagnosis: {kind: label, positive: "1"}}
    trv: {K: [3, 5, 10, 15, 20]}

Every section is optional except ``dataset``. Relative ``output_dir``
values resolve against ``$XLOOP_OUTPUT_ROOT`` when set, else the
working directory.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .data import DEFAULT_MISSING, parse_schema
from .metrics import EPSILON

CONFIG_VERSION = 1
OUTPUT_ROOT_ENV = "XLOOP_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    path: str
    schema: dict[str, Any]
    missing: list[str] = field(default_factory=lambda: list(DEFAULT_MISSING))


@dataclass
class SplitSection:
    test_fraction: float = 0.2


@dataclass
class SmoteSection:
    enabled: bool = True
    k_neighbors: int = 5


@dataclass
class TrainSection:
    learning_rate: float = 0.001
    max_epochs: int = 500
    patience: int = 10
    batch_size: int = 32
    validation_fraction: float = 0.1


@dataclass
class ShapSection:
    coalition_budget: int | None = None
    mode: str = "sampled"


@dataclass
class IDWSection:
    enabled: bool = True
    iterations: int = 4
    rescale: str = "feature"


@dataclass
class TRVSection:
    enabled: bool = True
    K: list[int] = field(default_factory=lambda: [3, 5, 10, 15, 20])


@dataclass
class RegularizedSection:
    L1: bool = True
    L2: bool = True
    L12: bool = True
    factor: float = 0.0001


@dataclass
class SelectKSection:
    enabled: bool = True


@dataclass
class RunConfig:
    dataset: DatasetSection
    name: str = "dataset"
    seed: int = 0
    output_dir: str = "runs/run"
    epsilon: float = EPSILON
    background_k: int = 4
    n_jobs: int = 1
    version: int = CONFIG_VERSION
    split: SplitSection = field(default_factory=SplitSection)
    smote: SmoteSection = field(default_factory=SmoteSection)
    train: TrainSection = field(default_factory=TrainSection)
    shap: ShapSection = field(default_factory=ShapSection)
    idw: IDWSection = field(default_factory=IDWSection)
    trv: TRVSection = field(default_factory=TRVSection)
    regularized: RegularizedSection = field(default_factory=RegularizedSection)
    selectk: SelectKSection = field(default_factory=SelectKSection)
    base_dir: str = field(default=".", repr=False)

    def dataset_path(self) -> Path:
        p = Path(self.dataset.path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def output_path(self) -> Path:
        p = Path(self.output_dir)
        if p.is_absolute():
            return p
        root = os.environ.get(OUTPUT_ROOT_ENV)
        return Path(root) / p if root else Path.cwd() / p

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def validate(self) -> "RunConfig":
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"config version {self.version}, expected {CONFIG_VERSION}")
        if not self.dataset_path().exists():
            raise ConfigError(f"dataset not found: {self.dataset_path()}")
        try:
            parse_schema(self.dataset.schema)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 0 < self.split.test_fraction < 1:
            raise ConfigError("split.test_fraction must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.background_k < 1 or self.background_k % 2:
            raise ConfigError("background_k must be a positive even number (split across groups)")
        if self.idw.rescale not in ("feature", "weighted"):
            raise ConfigError("idw.rescale must be 'feature' or 'weighted'")
        if self.idw.iterations < 1:
            raise ConfigError("idw.iterations must be >= 1")
        if any(int(k) < 1 for k in self.trv.K):
            raise ConfigError("trv.K values must be >= 1")
        if self.shap.mode not in ("sampled", "exact"):
            raise ConfigError("shap.mode must be 'sampled' or 'exact'")
        if self.train.learning_rate <= 0 or self.train.patience < 1:
            raise ConfigError("train.learning_rate must be > 0 and train.patience >= 1")
        if self.regularized.factor < 0:
            raise ConfigError("regularized.factor must be >= 0")
        return self


_SECTIONS = {
    "dataset": DatasetSection, "split": SplitSection, "smote": SmoteSection,
    "train": TrainSection, "shap": ShapSection, "idw": IDWSection, "trv": TRVSection,
    "regularized": RegularizedSection, "selectk": SelectKSection,
}


def from_dict(raw: dict, base_dir=".") -> RunConfig:
    raw = dict(raw)
    kwargs: dict[str, Any] = {}
    try:
        for key, cls in _SECTIONS.items():
            if key in raw:
                section = raw.pop(key) or {}
                if not isinstance(section, dict):
                    raise ConfigError(f"section {key!r} must be a mapping")
                kwargs[key] = cls(**section)
        if "dataset" not in kwargs:
            raise ConfigError("config needs a 'dataset' section")
        cfg = RunConfig(**kwargs, **raw, base_dir=str(base_dir))
    except TypeError as exc:
        raise ConfigError(f"bad config key: {exc}") from None
    cfg.trv.K = [int(k) for k in cfg.trv.K]
    return cfg


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        node = raw
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section")
        node[parts[-1]] = yaml.safe_load(value)
    return raw


def load_config(path, overrides: list[str] = ()) -> tuple[RunConfig, dict]:
    """Parse, override and validate; also returns the effective raw mapping."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw = apply_overrides(raw, list(overrides))
    return from_dict(raw, base_dir=path.parent).validate(), raw
