"""Loss terms of the joint objective.

Each quadratic term is a plain sum of squared errors over timesteps and
coordinates. The functions accept NumPy arrays (returning floats) or torch
tensors (returning differentiable scalars).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .exceptions import InvalidConfigError, InvalidInputError, ShapeError


def _result(x):
    return float(x) if isinstance(x, np.generic | float) else x


def _as_seq(a):
    if isinstance(a, (list, tuple)):
        a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


def loss_koop(z_low_seq, z_low_pred_seq):
    """``sum_t ||z_{t+1} - K z_t||^2``; row ``t`` of the prediction targets row ``t+1``."""
    z, zp = _as_seq(z_low_seq), _as_seq(z_low_pred_seq)
    if z.shape[0] != zp.shape[0] + 1 or z.shape[1:] != zp.shape[1:]:
        raise ShapeError(f"expected predictions of shape ({z.shape[0] - 1}, ...), got {tuple(zp.shape)}")
    return _result(((z[1:] - zp) ** 2).sum())


def reg_high(z_high_seq):
    """``sum_t ||z_{t+1} - z_t||^2`` over a latent sequence."""
    z = _as_seq(z_high_seq)
    if z.shape[0] < 2:
        raise InvalidInputError("the smoothness penalty needs at least two timesteps")
    return _result(((z[1:] - z[:-1]) ** 2).sum())


def loss_rec(theta_seq, theta_pred_seq):
    """``sum_t ||theta_{t+1} - theta_hat_{t+1}||^2``."""
    th, tp = _as_seq(theta_seq), _as_seq(theta_pred_seq)
    if th.shape[0] != tp.shape[0] + 1 or th.shape[1:] != tp.shape[1:]:
        raise ShapeError(f"expected predictions of shape ({th.shape[0] - 1}, ...), got {tuple(tp.shape)}")
    return _result(((th[1:] - tp) ** 2).sum())


@dataclass(frozen=True)
class LossBreakdown:
    task: float
    rec: float
    koop: float
    reg_high: float
    total: float
    weights: tuple[float, float, float]

    def as_row(self) -> dict:
        d = asdict(self)
        d.pop("weights")
        return d


def check_weights(alpha, beta, gamma) -> tuple[float, float, float]:
    w = (float(alpha), float(beta), float(gamma))
    if any(not math.isfinite(x) or x < 0 for x in w):
        raise InvalidConfigError(f"loss weights must be finite and non-negative, got {w}")
    return w


def combine(task, rec, koop, reg, alpha, beta, gamma):
    """Weighted total; works on floats and on tensors."""
    return task + alpha * rec + beta * koop + gamma * reg


def total_loss(task, rec, koop, reg, alpha, beta, gamma) -> LossBreakdown:
    alpha, beta, gamma = check_weights(alpha, beta, gamma)
    parts = [float(x) for x in (task, rec, koop, reg)]
    if any(p < 0 for p in parts):
        raise InvalidInputError(f"loss components must be non-negative, got {parts}")
    return LossBreakdown(*parts, total=combine(*parts, alpha, beta, gamma),
                         weights=(alpha, beta, gamma))


def map_equivalence_check(z_high_seq, sigma: float = 1.0) -> tuple[float, float, float]:
    """Compare the smoothness penalty with a Gaussian random-walk log-prior.

    Returns ``(r_high, neg_log_prior, gap)`` where ``neg_log_prior`` is the
    negative log-density of all transitions ``z_{t+1} ~ N(z_t, sigma^2 I)``
    evaluated independently with ``scipy.stats``, and
    ``gap = neg_log_prior - r_high / (2 sigma^2)``. The gap depends only on
    the sequence shape and ``sigma``.
    """
    if not sigma > 0:
        raise InvalidConfigError(f"sigma must be positive, got {sigma}")
    z = _as_seq(np.asarray(z_high_seq, dtype=np.float64))
    r = reg_high(z)
    nlp = -float(stats.norm.logpdf(z[1:], loc=z[:-1], scale=sigma).sum())
    return r, nlp, nlp - r / (2.0 * sigma ** 2)


def random_walk_constant(t: int, m: int, sigma: float = 1.0) -> float:
    """Closed form of the gap: ``(T-1) * (m/2) * ln(2 pi sigma^2)``."""
    return (t - 1) * (m / 2.0) * math.log(2.0 * math.pi * sigma ** 2)
