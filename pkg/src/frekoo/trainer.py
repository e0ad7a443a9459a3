"""End-to-end joint training of the parameter bank and the Koopman coders.

One run:

1. warm start: train ``theta_1`` on the first source domain, then
   initialise each ``theta_t`` from ``theta_{t-1}`` and fine-tune it on
   domain ``t``;
2. for every epoch, re-rank the frequency bins of the current bank, freeze
   that mask, and take one Adam step on the weighted objective with three
   learning rates (bank, coders, ``K``);
3. decompose the final bank and decode ``K z_low(T) + z_high(T)`` as the
   parameters for the unseen next domain.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import torch

from . import spectral
from .base_model import (CLASSIFICATION, REGRESSION, FlatParams, TaskHead, forward_tensor,
                         init_params, task_loss_tensor)
from .datasets import DomainDataset
from .exceptions import InvalidConfigError, InvalidInputError, TrainingDivergedError
from .koopman import KoopmanState, save_state
from .objective import LossBreakdown, check_weights, combine

log = logging.getLogger(__name__)

LOSS_REDUCTIONS = ("mean", "sum")


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.9
    alpha: float = 10.0
    beta: float = 1.0
    gamma: float = 1.0
    lr_pre: float = 1e-2
    lr_co: float = 1e-3
    lr_ko: float = 1e-3
    epochs: int = 200
    m: int = 32
    seed: int = 0
    dataset: str = "2-moons"
    hidden: tuple[int, ...] = (50,)
    coder_widths: tuple[int, ...] = (1024, 512, 128)
    warm_start_steps: int = 500
    finetune_steps: int = 200
    baseline_steps: int = 1000
    # "mean": task averaged over domains, quadratic terms over their entries
    loss_reduction: str = "mean"
    fix_koopman: bool = False
    bypass_spectral: bool = False
    rebuild_each_epoch: bool = False
    rebuild_steps: int = 20
    divergence_limit: float = 1e8

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "coder_widths", tuple(int(w) for w in self.coder_widths))
        self.validate()

    def validate(self):
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidConfigError(f"tau must lie in [0, 1], got {self.tau}")
        check_weights(self.alpha, self.beta, self.gamma)
        for name in ("lr_pre", "lr_co", "lr_ko"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise InvalidConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.m < 1:
            raise InvalidConfigError(f"latent dimension m must be >= 1, got {self.m}")
        if self.loss_reduction not in LOSS_REDUCTIONS:
            raise InvalidConfigError(f"loss_reduction must be one of {LOSS_REDUCTIONS}")
        if min(self.warm_start_steps, self.finetune_steps, self.rebuild_steps, self.baseline_steps) < 0:
            raise InvalidConfigError("step counts must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["coder_widths"] = list(self.coder_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidConfigError(f"unknown config keys {unknown}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class ParameterBank:
    """One flat parameter vector per source domain, rows in time order."""

    thetas: np.ndarray
    head: TaskHead

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=np.float64)
        if self.thetas.ndim != 2 or self.thetas.shape[1] != self.head.n_params:
            raise InvalidInputError(
                f"bank must be (T, {self.head.n_params}), got {self.thetas.shape}")

    def __len__(self):
        return self.thetas.shape[0]

    def flat(self, t: int) -> FlatParams:
        return FlatParams(self.thetas[t].copy(), self.head.layout())


@dataclass
class TrainOutcome:
    bank: ParameterBank
    koopman: KoopmanState
    theta_next: FlatParams
    log: list[LossBreakdown]
    config: TrainConfig
    head: TaskHead
    label_shift: float = 0.0
    label_scale: float = 1.0
    masks: list[tuple[int, ...]] = field(default_factory=list)


def make_head(in_dim: int, kind: str, n_classes: int | None = 2, hidden=(50,)) -> TaskHead:
    if kind == CLASSIFICATION:
        return TaskHead(int(in_dim), tuple(hidden), int(n_classes), CLASSIFICATION)
    return TaskHead(int(in_dim), tuple(hidden), 1, REGRESSION)


def head_for(dataset: DomainDataset, hidden=(50,)) -> TaskHead:
    return make_head(dataset.in_dim, dataset.kind, dataset.n_classes, hidden)


@dataclass
class _Domains:
    """Source domains as tensors; regression labels standardized on the sources."""

    X: list[torch.Tensor]
    y: list[torch.Tensor]
    kind: str
    shift: float = 0.0
    scale: float = 1.0

    @classmethod
    def from_sources(cls, sources, kind):
        if len(sources) < 2:
            raise InvalidInputError(f"need at least 2 source domains, got {len(sources)}")
        for i, (X, y) in enumerate(sources):
            if len(X) == 0:
                raise InvalidInputError(f"source domain {i} is empty")
        shift, scale = 0.0, 1.0
        if kind == REGRESSION:
            y_all = np.concatenate([np.asarray(y, dtype=np.float64) for _, y in sources])
            shift = float(y_all.mean())
            scale = float(y_all.std()) or 1.0
        Xs = [torch.as_tensor(np.asarray(X, dtype=np.float64)) for X, _ in sources]
        if kind == CLASSIFICATION:
            ys = [torch.as_tensor(np.asarray(y, dtype=np.int64)) for _, y in sources]
        else:
            ys = [torch.as_tensor((np.asarray(y, dtype=np.float64) - shift) / scale) for _, y in sources]
        return cls(Xs, ys, kind, shift, scale)

    def __len__(self):
        return len(self.X)

    def loss(self, head, theta, t):
        return task_loss_tensor(forward_tensor(head, theta, self.X[t]), self.y[t], self.kind)


def _fit_steps(head, domains, t, theta0, lr, steps):
    theta = theta0.detach().clone().requires_grad_(True)
    if steps == 0:
        return theta.detach()
    opt = torch.optim.Adam([theta], lr=lr)
    for _ in range(steps):
        opt.zero_grad()
        domains.loss(head, theta, t).backward()
        opt.step()
    return theta.detach()


def warm_start_bank(dataset: DomainDataset, config: TrainConfig, head: TaskHead | None = None,
                    domains: _Domains | None = None) -> ParameterBank:
    """Sequentially trained per-domain parameters for the source domains."""
    head = head or head_for(dataset, config.hidden)
    domains = domains or _Domains.from_sources(dataset.sources, dataset.kind)
    return _warm_start(head, domains, config)


def _warm_start(head, domains, config) -> ParameterBank:
    g = torch.Generator().manual_seed(int(config.seed))
    theta = init_params(head, g)
    thetas = []
    for t in range(len(domains)):
        steps = config.warm_start_steps if t == 0 else config.finetune_steps
        theta = _fit_steps(head, domains, t, theta, config.lr_pre, steps)
        thetas.append(theta)
    return ParameterBank(torch.stack(thetas).numpy(), head)


class JointTrainer:
    """Holds the trainable bank, the Koopman state and the optimizer for one run."""

    def __init__(self, bank: ParameterBank, state: KoopmanState, domains: _Domains,
                 config: TrainConfig):
        self.config = config
        self.head = bank.head
        self.domains = domains
        self.state = state
        self.theta = torch.nn.Parameter(torch.as_tensor(bank.thetas.copy()))
        if config.fix_koopman:
            with torch.no_grad():
                state.k.copy_(torch.eye(state.m, dtype=torch.float64))
            state.k.requires_grad_(False)
        groups = [{"params": [self.theta], "lr": config.lr_pre},
                  {"params": state.coder_parameters(), "lr": config.lr_co}]
        if not config.fix_koopman:
            groups.append({"params": [state.k], "lr": config.lr_ko})
        self.optimizer = torch.optim.Adam(groups, betas=(0.9, 0.999), eps=1e-8)
        self.epoch = 0
        self.masks: list[tuple[int, ...]] = []

    @property
    def n_domains(self) -> int:
        return self.theta.shape[0]

    def current_mask(self) -> spectral.FrequencyMask:
        t = self.n_domains
        if self.config.bypass_spectral:
            n = spectral.n_freq_bins(t)
            return spectral.FrequencyMask(tuple(range(n)), n, 1.0)
        theta = self.theta.detach().numpy()
        mags = spectral.spectral_magnitudes(spectral.dft_forward(theta))
        return spectral.select_top_frequencies(mags, self.config.tau)

    def split(self, theta, mask):
        p = torch.as_tensor(spectral.lowpass_operator(self.n_domains, mask))
        low = p @ theta
        return low, theta - low

    def objective(self, theta, mask):
        """Reduced loss components and the weighted total for one forward pass."""
        cfg, st = self.config, self.state
        t_len, d = theta.shape
        low, high = self.split(theta, mask)
        z_low = st.enc_low(low)
        z_high = st.enc_high(high)
        z_pred = z_low[:-1] @ st.k.T
        theta_pred = st.dec(z_pred + z_high[:-1])

        task = sum(self.domains.loss(self.head, theta[t], t) for t in range(t_len))
        rec = ((theta[1:] - theta_pred) ** 2).sum()
        koop = ((z_low[1:] - z_pred) ** 2).sum()
        reg = ((z_high[1:] - z_high[:-1]) ** 2).sum()
        if cfg.loss_reduction == "mean":
            task = task / t_len
            rec = rec / ((t_len - 1) * d)
            koop = koop / ((t_len - 1) * st.m)
            reg = reg / ((t_len - 1) * st.m)
        beta = 0.0 if cfg.fix_koopman else cfg.beta
        total = combine(task, rec, koop, reg, cfg.alpha, beta, cfg.gamma)
        return (task, rec, koop, reg), total, (cfg.alpha, beta, cfg.gamma)

    def _rebuild(self):
        """Re-fit every bank row on its own domain before the joint step."""
        rows = [_fit_steps(self.head, self.domains, t, self.theta[t], self.config.lr_pre,
                           self.config.rebuild_steps) for t in range(self.n_domains)]
        with torch.no_grad():
            self.theta.copy_(torch.stack(rows))

    def train_epoch(self) -> LossBreakdown:
        if self.config.rebuild_each_epoch:
            self._rebuild()
        mask = self.current_mask()
        self.masks.append(mask.selected)
        parts, total, weights = self.objective(self.theta, mask)
        value = float(total.detach())
        if not math.isfinite(value) or abs(value) > self.config.divergence_limit:
            raise TrainingDivergedError(self.epoch, value)
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.epoch += 1
        return LossBreakdown(*(float(p.detach()) for p in parts), total=value, weights=weights)

    def bank(self) -> ParameterBank:
        return ParameterBank(self.theta.detach().numpy().copy(), self.head)

    def extrapolate(self) -> FlatParams:
        return extrapolate_target(self.bank(), self.state, self.config.tau,
                                  bypass_spectral=self.config.bypass_spectral)


def extrapolate_target(bank: ParameterBank, state: KoopmanState, tau: float,
                       bypass_spectral: bool = False) -> FlatParams:
    """Parameters for the next, unseen domain from the final bank."""
    thetas = bank.thetas
    if bypass_spectral:
        low, high = thetas, np.zeros_like(thetas)
    else:
        dec = spectral.decompose(thetas, tau)
        low, high = dec.low, dec.high
    lo = torch.as_tensor(low[-1:])
    hi = torch.as_tensor(high[-1:])
    with torch.no_grad():
        nxt = state.predict_tensor(lo, hi)[0].numpy()
    return FlatParams(nxt, bank.head.layout())


def build_state(d: int, config: TrainConfig) -> KoopmanState:
    return KoopmanState.build(d, m=config.m, widths=config.coder_widths, seed=config.seed + 1)


def train_frekoo(dataset: DomainDataset, config: TrainConfig, callback=None) -> TrainOutcome:
    """Warm start, ``config.epochs`` joint epochs, then extrapolation.

    Trains on ``dataset.sources``. ``callback(epoch, trainer, breakdown)``
    runs after every epoch.
    """
    return fit_sources(dataset.sources, head_for(dataset, config.hidden), config, callback)


def fit_sources(sources, head: TaskHead, config: TrainConfig, callback=None) -> TrainOutcome:
    """:func:`train_frekoo` on an explicit list of ``(X, y)`` source domains."""
    domains = _Domains.from_sources(sources, head.kind)
    bank = _warm_start(head, domains, config)
    state = build_state(head.n_params, config)
    trainer = JointTrainer(bank, state, domains, config)
    history = []
    for epoch in range(config.epochs):
        breakdown = trainer.train_epoch()
        history.append(breakdown)
        if callback is not None:
            callback(epoch, trainer, breakdown)
    log.debug("finished %d epochs, last total %.6g", config.epochs,
              history[-1].total if history else float("nan"))
    return TrainOutcome(bank=trainer.bank(), koopman=state, theta_next=trainer.extrapolate(),
                        log=history, config=config, head=head,
                        label_shift=domains.shift, label_scale=domains.scale,
                        masks=trainer.masks)


LOG_COLUMNS = ("epoch", "task", "rec", "koop", "reg_high", "total")


def write_training_log(path, history: list[LossBreakdown]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for i, b in enumerate(history):
            w.writerow([i + 1, *(repr(v) for v in (b.task, b.rec, b.koop, b.reg_high, b.total))])


def save_outcome(path, outcome: TrainOutcome) -> None:
    """Checkpoint with coders, ``K``, the bank, the extrapolated parameters and run metadata."""
    meta = {"config": outcome.config.to_dict(), "head": outcome.head.to_dict(),
            "label_shift": outcome.label_shift, "label_scale": outcome.label_scale}
    extra = {
        "bank": outcome.bank.thetas,
        "theta_next": outcome.theta_next.values,
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
    }
    save_state(path, outcome.koopman, config_hash=outcome.config.hash(), extra=extra)


def load_outcome_arrays(path):
    """``(state, header, meta, bank, theta_next, head)`` from a checkpoint written by :func:`save_outcome`."""
    from .koopman import load_state

    state, header, extra = load_state(path)
    meta = json.loads(bytes(extra["meta"]).decode())
    head = TaskHead(**{**meta["head"], "hidden": tuple(meta["head"]["hidden"])})
    return state, header, meta, extra["bank"], extra["theta_next"], head
