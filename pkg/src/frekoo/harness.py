"""Baselines, metrics, ablations, sensitivity sweeps and latent risk diagnostics."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import spectral
from .base_model import CLASSIFICATION, FlatParams, TaskHead, forward, mean_absolute_error, misclassification
from .datasets import (CsvSchema, DomainDataset, data_dir, gen_periodic_moons, gen_rotated_moons,
                       load_csv_domains)
from .estimators import BASELINES, fit_baseline
from .exceptions import InvalidConfigError, InvalidInputError
from .trainer import TrainConfig, TrainOutcome, _Domains, _fit_steps, head_for, train_frekoo

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_koop", "no_freq", "no_rec", "no_koop_loss", "no_reg_high")
SWEEP_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
TAU_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
MISCLASSIFICATION = "misclassification"
MAE = "mae"

GENERATORS = {"rotated_moons": gen_rotated_moons, "periodic_moons": gen_periodic_moons}


@dataclass
class EvalResult:
    method: str
    dataset: str
    metric: str
    values: list[float]
    seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        if not self.values:
            raise InvalidInputError("an EvalResult needs at least one seed")
        if self.seeds and len(self.seeds) != len(self.values):
            raise InvalidInputError("seeds and values differ in length")

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        """Population standard deviation over seeds."""
        return float(np.std(self.values))

    def summary(self) -> dict:
        return {"method": self.method, "dataset": self.dataset, "metric": self.metric,
                "mean": self.mean, "std": self.std, "n_seeds": len(self.values)}


@dataclass(frozen=True)
class RiskDiagnostics:
    e_low: float
    e_high: float


def load_dataset(source: dict, seed: int, name: str | None = None) -> DomainDataset:
    """Build a dataset from a config ``source`` entry (generator or CSV file)."""
    if "generator" in source:
        gen = source["generator"]
        if gen not in GENERATORS:
            raise InvalidConfigError(f"unknown generator {gen!r}; known: {sorted(GENERATORS)}")
        kwargs = {k: v for k, v in source.items() if k != "generator"}
        return GENERATORS[gen](seed=seed, **kwargs)
    if "file" not in source:
        raise InvalidConfigError("dataset source needs a 'generator' or a 'file'")
    path = Path(source["file"])
    if not path.is_absolute():
        path = data_dir() / path
    schema = CsvSchema.from_dict(source.get("schema") or {})
    return load_csv_domains(path, schema, source.get("n_domains"), source.get("split_mode", "equal"),
                            strict=source.get("strict", False), name=name)


def metric_for(kind: str) -> str:
    return MISCLASSIFICATION if kind == CLASSIFICATION else MAE


def evaluate(theta, head: TaskHead, domain, label_shift: float = 0.0, label_scale: float = 1.0) -> float:
    """Misclassification percentage, or MAE on de-standardized predictions."""
    X, y = domain
    if len(X) == 0:
        raise InvalidInputError("cannot evaluate on an empty domain")
    out = forward(head, theta, np.asarray(X, dtype=np.float64))
    if head.kind == CLASSIFICATION:
        return misclassification(out, y)
    return mean_absolute_error(out * label_scale + label_shift, y)


def _baseline_one(kind, source, name, config, seed):
    ds = load_dataset(source, seed, name)
    cfg = config.replace(seed=seed)
    head = head_for(ds, cfg.hidden)
    theta, shift, scale = fit_baseline(kind, ds.sources, head, cfg)
    return evaluate(theta, head, ds.target, shift, scale), metric_for(ds.kind), ds.name


def _frekoo_one(source, name, config, seed):
    ds = load_dataset(source, seed, name)
    outcome = train_frekoo(ds, config.replace(seed=seed))
    value = evaluate(outcome.theta_next, outcome.head, ds.target, outcome.label_shift, outcome.label_scale)
    return value, metric_for(ds.kind), ds.name


def _map_seeds(fn, args, seeds, jobs):
    if jobs and jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, *zip(*[(*args, s) for s in seeds])))
    return [fn(*args, s) for s in seeds]


def _collect(method, runs, seeds):
    values = [r[0] for r in runs]
    return EvalResult(method, runs[0][2], runs[0][1], values, list(seeds))


def run_baseline(kind: str, source: dict, config: TrainConfig, seeds=(0, 1, 2, 3, 4),
                 name: str | None = None, jobs: int = 1) -> EvalResult:
    if kind not in BASELINES:
        raise InvalidConfigError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    runs = _map_seeds(_baseline_one, (kind, source, name, config), list(seeds), jobs)
    return _collect(kind, runs, seeds)


def run_frekoo(source: dict, config: TrainConfig, seeds=(0, 1, 2, 3, 4), name: str | None = None,
               jobs: int = 1, method: str = "frekoo") -> EvalResult:
    runs = _map_seeds(_frekoo_one, (source, name, config), list(seeds), jobs)
    return _collect(method, runs, seeds)


def variant_config(variant: str, config: TrainConfig) -> TrainConfig:
    """The training config that realises one ablation variant."""
    if variant == "full":
        return config
    if variant == "no_koop":
        return config.replace(fix_koopman=True, beta=0.0)
    if variant == "no_freq":
        return config.replace(bypass_spectral=True)
    if variant == "no_rec":
        return config.replace(alpha=0.0)
    if variant == "no_koop_loss":
        return config.replace(beta=0.0)
    if variant == "no_reg_high":
        return config.replace(gamma=0.0)
    raise InvalidConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def run_ablation(variant: str, source: dict, config: TrainConfig, seeds=(0, 1, 2, 3, 4),
                 name: str | None = None, jobs: int = 1) -> EvalResult:
    cfg = variant_config(variant, config)
    return run_frekoo(source, cfg, seeds, name, jobs, method=variant)


def run_sensitivity(source: dict, config: TrainConfig, parameter: str, grid=None,
                    seeds=(0, 1, 2, 3, 4), name: str | None = None, jobs: int = 1) -> list[EvalResult]:
    """One result per grid value of ``parameter`` (``tau``, ``alpha``, ``beta`` or ``gamma``)."""
    if parameter not in ("tau", "alpha", "beta", "gamma"):
        raise InvalidConfigError(f"cannot sweep {parameter!r}")
    grid = tuple(grid) if grid is not None else (TAU_GRID if parameter == "tau" else SWEEP_GRID)
    out = []
    for value in grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore" if value == 0 and parameter == "tau" else "default")
            res = run_frekoo(source, config.replace(**{parameter: float(value)}), seeds, name, jobs,
                             method=f"{parameter}={value:g}")
        out.append(res)
    return out


def fit_probe(dataset: DomainDataset, outcome: TrainOutcome, steps: int | None = None) -> np.ndarray:
    """Approximate target-optimal parameters: fine-tune the last bank row on the target."""
    cfg = outcome.config
    data = _Domains.from_sources([dataset.sources[-1], dataset.target], dataset.kind)
    start = torch.as_tensor(outcome.bank.thetas[-1])
    steps = cfg.finetune_steps if steps is None else steps
    return _fit_steps(outcome.head, data, 1, start, cfg.lr_pre, steps).numpy()


def risk_diagnostics(outcome: TrainOutcome, probe_theta) -> RiskDiagnostics | None:
    """Latent gaps between the extrapolated step and the encoded probe parameters.

    The probe is appended to the bank and the extended trajectory is split with
    the run's ``tau``; ``E_low`` compares ``K z_low(T)`` with the probe's low
    latent and ``E_high`` compares ``z_high(T)`` with its high latent.
    """
    if probe_theta is None:
        log.info("risk diagnostics skipped: no probe parameters")
        return None
    probe = np.asarray(probe_theta.values if isinstance(probe_theta, FlatParams) else probe_theta,
                       dtype=np.float64)
    bank = outcome.bank.thetas
    if probe.shape != (bank.shape[1],):
        raise InvalidInputError(f"probe must have length {bank.shape[1]}, got {probe.shape}")
    tau, bypass = outcome.config.tau, outcome.config.bypass_spectral
    cur = _bands(bank, tau, bypass)
    ext = _bands(np.vstack([bank, probe]), tau, bypass)
    st = outcome.koopman
    with torch.no_grad():
        z_low_pred = st.enc_low(torch.as_tensor(cur[0][-1:])) @ st.k.T
        z_high_last = st.enc_high(torch.as_tensor(cur[1][-1:]))
        z_low_probe = st.enc_low(torch.as_tensor(ext[0][-1:]))
        z_high_probe = st.enc_high(torch.as_tensor(ext[1][-1:]))
    e_low = float(torch.linalg.norm(z_low_pred - z_low_probe))
    e_high = float(torch.linalg.norm(z_high_last - z_high_probe))
    return RiskDiagnostics(e_low, e_high)


def _bands(thetas, tau, bypass):
    if bypass:
        return thetas, np.zeros_like(thetas)
    dec = spectral.decompose(thetas, tau)
    return dec.low, dec.high


def predicted_trajectory(outcome: TrainOutcome) -> np.ndarray:
    """One-step predictions for rows 2..T of the bank; row 1 is NaN."""
    bank = outcome.bank.thetas
    low, high = _bands(bank, outcome.config.tau, outcome.config.bypass_spectral)
    with torch.no_grad():
        pred = outcome.koopman.predict_tensor(torch.as_tensor(low[:-1]), torch.as_tensor(high[:-1])).numpy()
    return np.vstack([np.full((1, bank.shape[1]), np.nan), pred])


def write_trajectory_dump(path, outcome: TrainOutcome) -> None:
    """Per-step means of the raw, low, high and reconstructed parameter trajectories."""
    bank = outcome.bank.thetas
    if outcome.config.bypass_spectral:
        mask = spectral.FrequencyMask(tuple(range(spectral.n_freq_bins(len(bank)))),
                                      spectral.n_freq_bins(len(bank)), 1.0)
        dec = spectral.decompose(bank, 1.0, mask=mask)
    else:
        dec = spectral.decompose(bank, outcome.config.tau)
    spectral.write_decomposition_dump(path, bank, dec, predicted_trajectory(outcome))


RESULT_COLUMNS = ("method", "dataset", "metric", "seed", "value")


def write_results(path, results: list[EvalResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in results:
            seeds = r.seeds or list(range(len(r.values)))
            for s, v in zip(seeds, r.values):
                w.writerow([r.method, r.dataset, r.metric, s, repr(v)])


def write_summary(path, results: list[EvalResult]) -> None:
    Path(path).write_text(json.dumps([r.summary() for r in results], indent=2, sort_keys=True) + "\n")


def write_sweep(path, parameter: str, results: list[EvalResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("parameter", "value", "mean", "std", "n_seeds"))
        for r in results:
            value = r.method.split("=", 1)[1]
            w.writerow([parameter, value, repr(r.mean), repr(r.std), len(r.values)])
