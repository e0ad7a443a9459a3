"""Per-domain task network driven by a flat parameter vector.

Every source domain owns one flat vector ``theta_t``; the network shape is
fixed by a :class:`TaskHead` so all vectors share one layout and can be
stacked into a trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import torch
import torch.nn.functional as F

from .exceptions import InvalidConfigError, InvalidInputError, ShapeError

CLASSIFICATION = "classification"
REGRESSION = "regression"

_ACTIVATIONS = {"tanh": torch.tanh, "linear": lambda x: x}


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class TaskHead:
    """MLP descriptor: ``in_dim -> hidden... -> n_outputs``."""

    in_dim: int
    hidden: tuple[int, ...] = (50,)
    n_outputs: int = 2
    kind: str = CLASSIFICATION
    activation: str = "tanh"

    def __post_init__(self):
        if self.kind not in (CLASSIFICATION, REGRESSION):
            raise InvalidConfigError(f"unknown head kind {self.kind!r}")
        if self.kind == REGRESSION and self.n_outputs != 1:
            raise InvalidConfigError("regression heads have exactly one output")
        if self.activation not in _ACTIVATIONS:
            raise InvalidConfigError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.n_outputs)

    def layout(self) -> tuple[LayoutEntry, ...]:
        entries, offset = [], 0
        w = self.widths
        for i, (fan_in, fan_out) in enumerate(zip(w[:-1], w[1:])):
            for name, shape in ((f"W{i}", (fan_out, fan_in)), (f"b{i}", (fan_out,))):
                entries.append(LayoutEntry(name, shape, offset))
                offset += math.prod(shape)
        return tuple(entries)

    @property
    def n_params(self) -> int:
        last = self.layout()[-1]
        return last.offset + last.size

    def to_dict(self) -> dict:
        return {"in_dim": self.in_dim, "hidden": list(self.hidden),
                "n_outputs": self.n_outputs, "kind": self.kind,
                "activation": self.activation}


@dataclass(frozen=True)
class FlatParams:
    values: np.ndarray
    layout: tuple[LayoutEntry, ...] = field(repr=False)

    def __post_init__(self):
        total = sum(e.size for e in self.layout)
        if self.values.shape != (total,):
            raise ShapeError(f"values have shape {self.values.shape}, layout needs ({total},)")

    @property
    def size(self) -> int:
        return self.values.size


def flatten(tensors: Mapping[str, np.ndarray]) -> FlatParams:
    """Concatenate named tensors in insertion order."""
    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        a = np.asarray(arr, dtype=np.float64)
        entries.append(LayoutEntry(name, tuple(a.shape), offset))
        chunks.append(a.ravel())
        offset += a.size
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    return FlatParams(values=values, layout=tuple(entries))


def unflatten(params: FlatParams) -> dict[str, np.ndarray]:
    out = {}
    for e in params.layout:
        out[e.name] = params.values[e.offset:e.offset + e.size].reshape(e.shape).copy()
    return out


def init_params(head: TaskHead, generator: torch.Generator | None = None) -> torch.Tensor:
    """Fan-in scaled uniform init, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` for every entry."""
    chunks = []
    for e in head.layout():
        fan_in = head.widths[int(e.name[1:])]
        bound = 1.0 / math.sqrt(fan_in)
        u = torch.rand(e.size, generator=generator, dtype=torch.float64)
        chunks.append((2.0 * u - 1.0) * bound)
    return torch.cat(chunks)


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def forward_tensor(head: TaskHead, theta: torch.Tensor, X: torch.Tensor) -> torch.Tensor:
    """Differentiable forward pass; ``X`` is ``(N, in_dim)``.

    Returns logits ``(N, k)`` for classification and ``(N,)`` for regression.
    """
    if X.shape[-1] != head.in_dim:
        raise ShapeError(f"features have dimension {X.shape[-1]}, head expects {head.in_dim}")
    if theta.shape[-1] != head.n_params:
        raise ShapeError(f"theta has length {theta.shape[-1]}, head needs {head.n_params}")
    act = _ACTIVATIONS[head.activation]
    layout = head.layout()
    h = X
    n_layers = len(layout) // 2
    for i in range(n_layers):
        w, b = layout[2 * i], layout[2 * i + 1]
        W = theta[w.offset:w.offset + w.size].reshape(w.shape)
        h = h @ W.T + theta[b.offset:b.offset + b.size]
        if i < n_layers - 1:
            h = act(h)
    return h[:, 0] if head.kind == REGRESSION else h


def forward(head: TaskHead, theta, X) -> np.ndarray:
    """NumPy-facing forward pass. A single feature vector returns a single prediction."""
    values = theta.values if isinstance(theta, FlatParams) else theta
    x = np.asarray(X, dtype=np.float64)
    single = x.ndim == 1
    with torch.no_grad():
        out = forward_tensor(head, _as_tensor(values), _as_tensor(np.atleast_2d(x)))
    out = out.numpy()
    return out[0] if single else out


def task_loss_tensor(predictions: torch.Tensor, labels: torch.Tensor, kind: str) -> torch.Tensor:
    if predictions.shape[0] == 0:
        raise InvalidInputError("empty batch")
    if predictions.shape[0] != labels.shape[0]:
        raise ShapeError(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    if kind == CLASSIFICATION:
        return F.cross_entropy(predictions, labels.long())
    return torch.mean((predictions - labels) ** 2)


def task_loss(predictions, labels, kind: str) -> float:
    """Mean cross-entropy (classification) or mean squared error (regression)."""
    with torch.no_grad():
        value = task_loss_tensor(_as_tensor(predictions), _as_tensor(labels), kind)
    return float(value)


def misclassification(logits, labels) -> float:
    """Error rate in percent."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidInputError("empty batch")
    return float(100.0 * np.mean(np.argmax(logits, axis=1) != labels))


def mean_absolute_error(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        raise InvalidInputError("empty batch")
    return float(np.mean(np.abs(predictions - targets)))
