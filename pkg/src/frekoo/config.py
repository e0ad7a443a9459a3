"""YAML run configuration: shared defaults plus one section per dataset."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .exceptions import InvalidConfigError
from .trainer import TrainConfig

REQUIRED_KEYS = ("tau", "alpha", "beta", "gamma", "lr_pre", "lr_co", "lr_ko")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class DatasetSettings:
    name: str
    train: TrainConfig
    source: dict
    seeds: tuple[int, ...] = DEFAULT_SEEDS


@dataclass
class RunConfig:
    raw: dict
    path: str = "<default>"
    defaults: dict = field(init=False)
    datasets: dict = field(init=False)

    def __post_init__(self):
        if not isinstance(self.raw, dict):
            raise InvalidConfigError(f"{self.path}: top level must be a mapping")
        self.defaults = dict(self.raw.get("defaults") or {})
        self.datasets = dict(self.raw.get("datasets") or {})
        if not self.datasets:
            raise InvalidConfigError(f"{self.path}: no 'datasets' section")

    def names(self) -> list[str]:
        return list(self.datasets)

    def dataset(self, name: str) -> DatasetSettings:
        if name not in self.datasets:
            raise InvalidConfigError(f"{self.path}: unknown dataset {name!r}; known: {self.names()}")
        merged = {**self.defaults, **(self.datasets[name] or {})}
        for key in REQUIRED_KEYS:
            if key not in merged:
                raise InvalidConfigError(f"{self.path}: dataset {name!r} is missing config key {key!r}")
        source = merged.pop("source", None)
        if not isinstance(source, dict):
            raise InvalidConfigError(f"{self.path}: dataset {name!r} is missing config key 'source'")
        seeds = tuple(int(s) for s in merged.pop("seeds", DEFAULT_SEEDS))
        try:
            train = TrainConfig.from_dict({**merged, "dataset": name})
        except TypeError as exc:
            raise InvalidConfigError(f"{self.path}: dataset {name!r}: {exc}") from exc
        return DatasetSettings(name, train, source, seeds)


def default_config_text() -> str:
    return resources.files("frekoo").joinpath("configs/default.yaml").read_text()


def load_config(path=None) -> RunConfig:
    """Parse ``path``, or the shipped defaults when ``path`` is None."""
    if path is None:
        return RunConfig(yaml.safe_load(default_config_text()))
    p = Path(path)
    if not p.exists():
        raise InvalidConfigError(f"config file {p} not found")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{p}: not valid YAML ({exc})") from exc
    return RunConfig(raw, str(p))
