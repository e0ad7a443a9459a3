"""scikit-learn style wrappers around the trainer and the time-agnostic baselines.

Training data is passed as one feature matrix with a per-row domain index;
domains are ordered by that index and the fitted model targets the domain
right after the last one seen.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .base_model import CLASSIFICATION, REGRESSION, FlatParams, TaskHead, forward, init_params
from .exceptions import InvalidConfigError, InvalidInputError
from .trainer import TrainConfig, _Domains, _fit_steps, _warm_start, fit_sources, make_head

BASELINES = ("offline", "last_domain", "inc_finetune")


def split_by_domain(X, y, domains):
    """List of ``(X_t, y_t)`` ordered by ascending domain index."""
    domains = np.asarray(domains)
    if domains.shape != (len(X),):
        raise InvalidInputError(f"domains must have one entry per row, got shape {domains.shape}")
    order = np.unique(domains)
    if len(order) < 2:
        raise InvalidInputError(f"need rows from at least 2 domains, got {len(order)}")
    return [(X[domains == d], y[domains == d]) for d in order], order


def fit_baseline(kind: str, sources, head: TaskHead, config: TrainConfig):
    """Parameters of a time-agnostic baseline and the standardization used for its labels.

    ``offline`` pools all sources, ``last_domain`` uses the final source only,
    ``inc_finetune`` is the last row of the sequential warm start.
    """
    if kind not in BASELINES:
        raise InvalidConfigError(f"unknown baseline {kind!r}; expected one of {BASELINES}")
    domains = _Domains.from_sources(sources, head.kind)
    if kind == "inc_finetune":
        theta = _warm_start(head, domains, config).thetas[-1]
    else:
        if kind == "offline":
            data = _Domains([torch.cat(domains.X)], [torch.cat(domains.y)], head.kind)
        else:
            data = _Domains([domains.X[-1]], [domains.y[-1]], head.kind)
        g = torch.Generator().manual_seed(int(config.seed))
        theta = _fit_steps(head, data, 0, init_params(head, g), config.lr_pre,
                           config.baseline_steps).numpy()
    return FlatParams(np.asarray(theta, dtype=np.float64).copy(), head.layout()), domains.shift, domains.scale


class _DomainModel(BaseEstimator):
    _kind = CLASSIFICATION

    def _config(self) -> TrainConfig:
        names = [n for n in TrainConfig.__dataclass_fields__ if n != "dataset" and hasattr(self, n)]
        return TrainConfig(**{n: getattr(self, n) for n in names})

    def _prepare(self, X, y, domains):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=self._kind == REGRESSION)
        if self._kind == CLASSIFICATION:
            check_classification_targets(y)
            self.classes_, y = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        sources, self.domains_ = split_by_domain(X, y, domains)
        n_classes = len(self.classes_) if self._kind == CLASSIFICATION else None
        head = make_head(X.shape[1], self._kind, n_classes, self.hidden)
        return sources, head

    def _raw(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.head_, self.theta_, X)


class _ClassifierOutputs:
    def predict_proba(self, X):
        logits = self._raw(X)
        logits = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        index = np.argmax(self._raw(X), axis=1)
        return self.classes_[index]


class _RegressorOutputs:
    def predict(self, X):
        return self._raw(X) * self.label_scale_ + self.label_shift_


class _FreKooBase(_DomainModel):
    def __init__(self, tau=0.9, alpha=10.0, beta=1.0, gamma=1.0, lr_pre=1e-2, lr_co=1e-3,
                 lr_ko=1e-3, epochs=200, m=32, hidden=(50,), coder_widths=(1024, 512, 128),
                 warm_start_steps=500, finetune_steps=200, loss_reduction="mean",
                 fix_koopman=False, bypass_spectral=False, seed=0):
        self.tau = tau
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.lr_pre = lr_pre
        self.lr_co = lr_co
        self.lr_ko = lr_ko
        self.epochs = epochs
        self.m = m
        self.hidden = hidden
        self.coder_widths = coder_widths
        self.warm_start_steps = warm_start_steps
        self.finetune_steps = finetune_steps
        self.loss_reduction = loss_reduction
        self.fix_koopman = fix_koopman
        self.bypass_spectral = bypass_spectral
        self.seed = seed

    def fit(self, X, y, domains):
        config = self._config()
        sources, head = self._prepare(X, y, domains)
        self.outcome_ = fit_sources(sources, head, config)
        self.head_ = head
        self.theta_ = self.outcome_.theta_next
        self.label_shift_ = self.outcome_.label_shift
        self.label_scale_ = self.outcome_.label_scale
        self.koopman_ = self.outcome_.koopman
        self.bank_ = self.outcome_.bank.thetas
        return self


class FreKooClassifier(_ClassifierOutputs, ClassifierMixin, _FreKooBase):
    """Classifier whose parameters are extrapolated to the domain after the last seen one."""

    _kind = CLASSIFICATION


class FreKooRegressor(_RegressorOutputs, RegressorMixin, _FreKooBase):
    _kind = REGRESSION


class _BaselineBase(_DomainModel):
    def __init__(self, strategy="offline", hidden=(50,), lr_pre=1e-2, baseline_steps=1000,
                 warm_start_steps=500, finetune_steps=200, seed=0):
        self.strategy = strategy
        self.hidden = hidden
        self.lr_pre = lr_pre
        self.baseline_steps = baseline_steps
        self.warm_start_steps = warm_start_steps
        self.finetune_steps = finetune_steps
        self.seed = seed

    def fit(self, X, y, domains):
        config = self._config()
        sources, head = self._prepare(X, y, domains)
        self.theta_, self.label_shift_, self.label_scale_ = fit_baseline(self.strategy, sources, head, config)
        self.head_ = head
        return self


class BaselineClassifier(_ClassifierOutputs, ClassifierMixin, _BaselineBase):
    _kind = CLASSIFICATION


class BaselineRegressor(_RegressorOutputs, RegressorMixin, _BaselineBase):
    _kind = REGRESSION
