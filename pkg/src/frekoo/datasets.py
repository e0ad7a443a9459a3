"""Chronologically ordered domain sequences.

Synthetic streams are rotated two-moons clouds; real streams come from a
CSV file with a time column, split into contiguous chronological blocks.
The last domain of every sequence is the target, all earlier ones are
sources.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.datasets import make_moons

from .base_model import CLASSIFICATION, REGRESSION
from .exceptions import DatasetUnavailableError, IngestionError, InvalidInputError

MOONS_CENTER = np.array([0.5, 0.25])
DATA_DIR_ENV = "FREKOO_DATA_DIR"


@dataclass
class DomainDataset:
    name: str
    domains: list[tuple[np.ndarray, np.ndarray]]
    kind: str = CLASSIFICATION
    n_classes: int | None = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.domains) < 2:
            raise InvalidInputError(f"{self.name}: need at least 2 domains, got {len(self.domains)}")
        if self.kind not in (CLASSIFICATION, REGRESSION):
            raise InvalidInputError(f"unknown label kind {self.kind!r}")
        dims = {np.asarray(X).shape[1] for X, _ in self.domains}
        if len(dims) != 1:
            raise InvalidInputError(f"{self.name}: domains disagree on feature dimension {sorted(dims)}")
        for i, (X, y) in enumerate(self.domains):
            if len(X) == 0 or len(X) != len(y):
                raise InvalidInputError(f"{self.name}: domain {i} is empty or has mismatched labels")
        if self.kind == CLASSIFICATION and self.n_classes is None:
            self.n_classes = int(max(int(np.max(y)) for _, y in self.domains)) + 1

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    @property
    def in_dim(self) -> int:
        return int(np.asarray(self.domains[0][0]).shape[1])

    @property
    def sources(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return self.domains[:-1]

    @property
    def target(self) -> tuple[np.ndarray, np.ndarray]:
        return self.domains[-1]

    def stacked(self, which=None):
        """``(X, y, domain_index)`` for the selected domains (default: all)."""
        idx = range(self.n_domains) if which is None else which
        X = np.concatenate([self.domains[i][0] for i in idx])
        y = np.concatenate([self.domains[i][1] for i in idx])
        d = np.concatenate([np.full(len(self.domains[i][1]), i) for i in idx])
        return X, y, d


def rotation_matrix(degrees: float) -> np.ndarray:
    a = math.radians(degrees)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def base_moons(seed: int, index: int, n_samples: int = 180, noise: float = 0.1):
    """Unrotated, centred moons draw for domain ``index`` of stream ``seed``."""
    rs = np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0]
    X, y = make_moons(n_samples=n_samples, noise=noise, random_state=int(rs))
    return X - MOONS_CENTER, y.astype(np.int64)


def _moons_stream(name, seed, angle_indices, angle_step, n_per_domain, noise):
    domains = []
    for i, k in enumerate(angle_indices):
        X, y = base_moons(seed, i, n_per_domain, noise)
        domains.append((X @ rotation_matrix(k * angle_step).T, y))
    return DomainDataset(name, domains, CLASSIFICATION, 2,
                         meta={"angle_indices": list(angle_indices), "angle_step": angle_step,
                               "noise": noise, "seed": seed})


def gen_rotated_moons(seed: int = 0, n_domains: int = 10, n_per_domain: int = 180,
                      angle_step: float = 18.0, noise: float = 0.1) -> DomainDataset:
    """Domain ``k`` is a fresh moons draw rotated ``k * angle_step`` degrees counter-clockwise."""
    return _moons_stream("2-moons", seed, list(range(n_domains)), angle_step, n_per_domain, noise)


def periodic_index_walk(top: int = 9, sweeps: int = 4) -> list[int]:
    """``0..top``, then alternate down/up sweeps without repeating the turning point."""
    walk = list(range(top + 1))
    for s in range(sweeps - 1):
        step = range(top - 1, -1, -1) if s % 2 == 0 else range(1, top + 1)
        walk.extend(step)
    return walk


def gen_periodic_moons(seed: int = 0, n_per_domain: int = 180, angle_step: float = 18.0,
                       noise: float = 0.1) -> DomainDataset:
    """37 domains whose rotation index goes 0 up to 9, down to 0, up to 9, down to 0."""
    return _moons_stream("p-moons", seed, periodic_index_walk(), angle_step, n_per_domain, noise)


@dataclass(frozen=True)
class CsvSchema:
    time_column: str
    feature_columns: tuple[str, ...]
    label_column: str
    label_kind: str = CLASSIFICATION
    time_is_datetime: bool = False
    label_threshold: float | None = None
    calendar_freq: str | None = None
    drop_columns: tuple[str, ...] = ()
    time_ascending: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        d = dict(d)
        d["feature_columns"] = tuple(d.get("feature_columns") or ())
        d["drop_columns"] = tuple(d.get("drop_columns") or ())
        return cls(**d)

    def features(self, columns) -> list[str]:
        """Declared feature columns, or every column not used or dropped when none are declared."""
        if self.feature_columns:
            return list(self.feature_columns)
        skip = {self.time_column, self.label_column, *self.drop_columns}
        return [c for c in columns if c not in skip]


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def _check_columns(frame: pd.DataFrame, schema: CsvSchema, path) -> None:
    needed = [schema.time_column, schema.label_column, *schema.feature_columns, *schema.drop_columns]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing columns {missing}")


def _calendar_periods(time: pd.Series, freq: str):
    """Period labels; ``"<n>D"`` counts n-day windows from the first timestamp."""
    if freq.endswith("D"):
        days = int(freq[:-1] or 1)
        return ((time - time.iloc[0]).dt.days // days).to_numpy()
    return time.dt.to_period(freq).astype(str).to_numpy()


def load_csv_domains(path, schema: CsvSchema, n_domains: int | None = None,
                     split_mode: str = "equal", strict: bool = True,
                     standardize: bool = True, name: str | None = None) -> DomainDataset:
    """Read a header-ful CSV into ``n_domains`` chronological blocks.

    ``split_mode="equal"`` makes blocks of (near) equal row count;
    ``"calendar"`` cuts at ``schema.calendar_freq`` period boundaries.
    With ``strict=True`` a decreasing time value raises, naming the first
    offending data row (1-based); otherwise rows are stably sorted by time.
    Features are standardized with the mean and std of the source blocks.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetUnavailableError(f"dataset file {path} not found")
    frame = pd.read_csv(path, skipinitialspace=True, float_precision="round_trip")
    _check_columns(frame, schema, path)
    if frame.empty:
        raise IngestionError(f"{path}: no data rows")

    time = frame[schema.time_column]
    if schema.time_is_datetime or split_mode == "calendar":
        time = pd.to_datetime(time)
    values = time.to_numpy()
    key = values if schema.time_ascending else -values.astype(np.float64)
    drops = np.flatnonzero(key[1:] < key[:-1])
    if drops.size:
        if strict:
            bad = int(drops[0]) + 1
            raise IngestionError(
                f"{path}: time column {schema.time_column!r} is out of order at data row {bad + 1} "
                f"(value {values[bad]!r} after {values[bad - 1]!r})"
            )
        order = np.argsort(key, kind="stable")
        frame, time = frame.iloc[order].reset_index(drop=True), time.iloc[order].reset_index(drop=True)

    if split_mode == "equal":
        if not n_domains or n_domains < 2:
            raise IngestionError("equal-count splitting needs n_domains >= 2")
        blocks = np.array_split(np.arange(len(frame)), n_domains)
    elif split_mode == "calendar":
        if not schema.calendar_freq:
            raise IngestionError("calendar splitting needs schema.calendar_freq")
        periods = _calendar_periods(time, schema.calendar_freq)
        codes = pd.factorize(periods, sort=True)[0]
        blocks = [np.flatnonzero(codes == c) for c in range(codes.max() + 1)]
        if n_domains is not None and len(blocks) != n_domains:
            raise IngestionError(f"{path}: calendar split gave {len(blocks)} domains, expected {n_domains}")
    else:
        raise IngestionError(f"unknown split_mode {split_mode!r}")
    for i, b in enumerate(blocks):
        if len(b) == 0:
            raise IngestionError(f"{path}: domain {i} would be empty")

    feature_columns = schema.features(frame.columns)
    if not feature_columns:
        raise IngestionError(f"{path}: no feature columns")
    try:
        X = frame[feature_columns].to_numpy(dtype=np.float64)
    except ValueError as exc:
        raise IngestionError(f"{path}: non-numeric feature column ({exc})") from exc
    y_raw = frame[schema.label_column]
    if schema.label_kind == CLASSIFICATION:
        if schema.label_threshold is not None:
            y = (y_raw.to_numpy(dtype=np.float64) >= schema.label_threshold).astype(np.int64)
        else:
            y = pd.factorize(y_raw, sort=True)[0].astype(np.int64)
        n_classes = int(y.max()) + 1
    else:
        y = y_raw.to_numpy(dtype=np.float64)
        n_classes = None

    if standardize:
        train_rows = np.concatenate(blocks[:-1])
        mu = X[train_rows].mean(axis=0)
        sd = X[train_rows].std(axis=0)
        X = (X - mu) / np.where(sd > 0, sd, 1.0)
    domains = [(X[b], y[b]) for b in blocks]
    return DomainDataset(name or path.stem, domains, schema.label_kind, n_classes,
                         meta={"source": str(path), "split_mode": split_mode})


def generated_schema(in_dim: int, kind: str = CLASSIFICATION) -> CsvSchema:
    return CsvSchema("domain", tuple(f"x{i}" for i in range(in_dim)), "label", kind)


def to_frame(dataset: DomainDataset, index: int | None = None) -> pd.DataFrame:
    which = range(dataset.n_domains) if index is None else [index]
    X, y, d = dataset.stacked(which)
    frame = pd.DataFrame(X, columns=[f"x{i}" for i in range(dataset.in_dim)])
    frame.insert(0, "domain", d)
    frame["label"] = y
    return frame


def write_domain_csvs(dataset: DomainDataset, out_dir) -> list[Path]:
    """One CSV per domain, named ``domain_XX.csv``, in the generated schema."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(dataset.n_domains):
        p = out / f"domain_{i:02d}.csv"
        to_frame(dataset, i).to_csv(p, index=False, float_format="%.17g")
        paths.append(p)
    return paths
