"""Latent linear dynamics over parameter vectors.

Two encoders map the dominant and residual bands of a parameter vector to
an ``m``-dimensional latent space; one decoder maps latents back to
parameter space. The dominant-band latent is advanced one domain by the
square matrix ``K``; the residual-band latent is added without being
advanced.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .exceptions import InvalidConfigError, InvalidInputError, ShapeError

DEFAULT_WIDTHS = (1024, 512, 128)
DEFAULT_LATENT_DIM = 32
DIAGONALIZABLE_COND_LIMIT = 1e8


class Mlp(nn.Module):
    """Fully connected stack; ``activation`` between layers, last layer linear."""

    def __init__(self, widths, activation="tanh", generator=None):
        super().__init__()
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2:
            raise InvalidConfigError("an MLP needs at least input and output widths")
        if activation not in ("tanh", "linear"):
            raise InvalidConfigError(f"unknown activation {activation!r}")
        self.activation = activation
        self.layers = nn.ModuleList(
            nn.Linear(a, b, dtype=torch.float64) for a, b in zip(self.widths[:-1], self.widths[1:])
        )
        with torch.no_grad():
            for layer in self.layers:
                bound = 1.0 / math.sqrt(layer.in_features)
                for p in (layer.weight, layer.bias):
                    u = torch.rand(p.shape, generator=generator, dtype=torch.float64)
                    p.copy_((2.0 * u - 1.0) * bound)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def forward(self, x):
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last and self.activation == "tanh":
                x = torch.tanh(x)
        return x

    def weights(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(l.weight.detach().numpy().copy(), l.bias.detach().numpy().copy())
                for l in self.layers]

    @classmethod
    def identity(cls, dim):
        """Single linear layer with identity weight and zero bias."""
        mlp = cls((dim, dim), activation="linear")
        with torch.no_grad():
            mlp.layers[0].weight.copy_(torch.eye(dim, dtype=torch.float64))
            mlp.layers[0].bias.zero_()
        return mlp


class KoopmanState(nn.Module):
    """Encoders for both bands, the shared decoder and the operator ``K``."""

    def __init__(self, enc_low: Mlp, enc_high: Mlp, dec: Mlp, k):
        super().__init__()
        m = enc_low.out_dim
        k = torch.as_tensor(np.asarray(k, dtype=np.float64) if not isinstance(k, torch.Tensor) else k,
                            dtype=torch.float64)
        if enc_high.out_dim != m or dec.in_dim != m or tuple(k.shape) != (m, m):
            raise ShapeError(
                f"latent sizes disagree: enc_low->{m}, enc_high->{enc_high.out_dim}, "
                f"dec<-{dec.in_dim}, K{tuple(k.shape)}"
            )
        if enc_low.in_dim != dec.out_dim or enc_high.in_dim != dec.out_dim:
            raise ShapeError("encoders and decoder disagree on the parameter dimension")
        self.enc_low = enc_low
        self.enc_high = enc_high
        self.dec = dec
        self.k = nn.Parameter(k.clone())

    @property
    def m(self) -> int:
        return self.k.shape[0]

    @property
    def d(self) -> int:
        return self.dec.out_dim

    @classmethod
    def build(cls, d, m=DEFAULT_LATENT_DIM, widths=DEFAULT_WIDTHS, seed=0,
              k_noise=1e-2, activation="tanh"):
        """Randomly initialised state; ``K = I + k_noise * N(0, 1)``."""
        g = torch.Generator().manual_seed(int(seed))
        widths = tuple(widths)
        enc_low = Mlp((d, *widths, m), activation, g)
        enc_high = Mlp((d, *widths, m), activation, g)
        dec = Mlp((m, *widths[::-1], d), activation, g)
        k = torch.eye(m, dtype=torch.float64) + k_noise * torch.randn(m, m, generator=g, dtype=torch.float64)
        return cls(enc_low, enc_high, dec, k)

    @classmethod
    def identity(cls, d):
        """Linear identity coders with ``K = I`` (requires ``m == d``)."""
        return cls(Mlp.identity(d), Mlp.identity(d), Mlp.identity(d), torch.eye(d, dtype=torch.float64))

    def predict_tensor(self, theta_low: torch.Tensor, theta_high: torch.Tensor) -> torch.Tensor:
        """Differentiable one-step prediction for row-stacked inputs."""
        z = self.enc_low(theta_low) @ self.k.T + self.enc_high(theta_high)
        return self.dec(z)

    def coder_parameters(self):
        return [*self.enc_low.parameters(), *self.enc_high.parameters(), *self.dec.parameters()]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self.state_dict().items():
            out[name] = p.detach().numpy().copy()
        return out

    def architecture(self) -> dict:
        return {"enc_low": list(self.enc_low.widths), "enc_high": list(self.enc_high.widths),
                "dec": list(self.dec.widths), "activation": self.enc_low.activation,
                "m": self.m}

    @classmethod
    def from_arrays(cls, arch: dict, arrays: dict[str, np.ndarray]):
        act = arch["activation"]
        state = cls(Mlp(arch["enc_low"], act), Mlp(arch["enc_high"], act), Mlp(arch["dec"], act),
                    torch.zeros(arch["m"], arch["m"], dtype=torch.float64))
        state.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in arrays.items()})
        return state


def _vector(x, n, what):
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (n,):
        raise ShapeError(f"{what} must have shape ({n},), got {v.shape}")
    return torch.from_numpy(v)


def _run(module, x):
    with torch.no_grad():
        return module(x[None, :])[0].numpy()


def encode_low(state: KoopmanState, theta_low) -> np.ndarray:
    return _run(state.enc_low, _vector(theta_low, state.d, "theta_low"))


def encode_high(state: KoopmanState, theta_high) -> np.ndarray:
    return _run(state.enc_high, _vector(theta_high, state.d, "theta_high"))


def decode(state: KoopmanState, z) -> np.ndarray:
    return _run(state.dec, _vector(z, state.m, "latent"))


def koopman_step(k, z) -> np.ndarray:
    """``K @ z``."""
    k = _operator(k)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (k.shape[0],):
        raise ShapeError(f"latent must have shape ({k.shape[0]},), got {z.shape}")
    return k @ z


def predict_next_param(state: KoopmanState, theta_low, theta_high) -> np.ndarray:
    """Decode ``K enc_low(theta_low) + enc_high(theta_high)`` once."""
    lo = _vector(theta_low, state.d, "theta_low")[None, :]
    hi = _vector(theta_high, state.d, "theta_high")[None, :]
    with torch.no_grad():
        return state.predict_tensor(lo, hi)[0].numpy()


def _operator(k) -> np.ndarray:
    if isinstance(k, KoopmanState):
        k = k.k.detach().numpy()
    elif isinstance(k, torch.Tensor):
        k = k.detach().numpy()
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError(f"Koopman operator must be square, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise InvalidInputError("Koopman operator contains non-finite entries")
    return k


def spectral_radius(k) -> float:
    """Largest eigenvalue modulus."""
    return float(np.max(np.abs(np.linalg.eigvals(_operator(k)))))


@dataclass
class StabilityReport:
    rho: float
    cond_v: float
    diagonalizable: bool
    q: int
    slack: float
    horizon_bounds: list[tuple[int, float, float]] = field(default_factory=list)
    violations: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def stability_bound_check(k, e0, h_max: int, cond_limit: float = DIAGONALIZABLE_COND_LIMIT,
                          rel_slack: float = 1e-8) -> StabilityReport:
    """Compare ``||K^h e0||`` with the eigen-basis bound for ``h = 1..h_max``.

    When the eigenvector matrix ``V`` has condition number below
    ``cond_limit`` the operator is treated as diagonalizable and the bound is
    ``cond(V) * rho(K)**h * ||e0||``. Otherwise the largest Jordan block is
    taken to be ``m`` and the polynomial form
    ``cond(V) * slack * (1 + h)**(m - 1) * rho(K)**h * ||e0||`` is used, where
    ``slack`` is the smallest constant that makes it hold for ``||K^h||`` on
    the horizon.
    """
    k = _operator(k)
    m = k.shape[0]
    e0 = np.asarray(e0, dtype=np.float64)
    if e0.shape != (m,):
        raise ShapeError(f"e0 must have shape ({m},), got {e0.shape}")
    e_norm = float(np.linalg.norm(e0))
    if e_norm == 0.0:
        raise InvalidInputError("e0 must be nonzero")
    if h_max < 1:
        raise InvalidInputError("h_max must be >= 1")

    eigvals, v = np.linalg.eig(k)
    rho = float(np.max(np.abs(eigvals)))
    with np.errstate(all="ignore"):
        cond_v = float(np.linalg.cond(v))
    diagonalizable = bool(np.isfinite(cond_v) and cond_v < cond_limit)
    q = 1 if diagonalizable else m
    cond_used = cond_v if diagonalizable else 1.0

    slack = 1.0
    if not diagonalizable:
        power = np.eye(m)
        ratios = []
        for h in range(1, h_max + 1):
            power = k @ power
            denom = (1.0 + h) ** (q - 1) * rho ** h
            ratios.append(np.linalg.norm(power, 2) / denom if denom > 0 else np.inf)
        slack = float(max(1.0, max(ratios)))

    report = StabilityReport(rho=rho, cond_v=cond_v, diagonalizable=diagonalizable, q=q, slack=slack)
    e = e0.copy()
    for h in range(1, h_max + 1):
        e = k @ e
        measured = float(np.linalg.norm(e))
        bound = cond_used * slack * (1.0 + h) ** (q - 1) * rho ** h * e_norm
        report.horizon_bounds.append((h, measured, bound))
        if measured > bound * (1.0 + rel_slack):
            report.violations.append(h)
    return report


def save_state(path, state: KoopmanState, config_hash: str = "", extra: dict | None = None) -> None:
    """Write a self-describing ``.npz`` checkpoint.

    Entries: every coder tensor and ``K`` under ``koopman/<name>``, any
    ``extra`` arrays under their own names, and a JSON header holding the
    architecture, ``m`` and ``config_hash``. Output bytes depend only on
    the values.
    """
    header = {"format": "frekoo-checkpoint/1", "architecture": state.architecture(),
              "m": state.m, "config_hash": config_hash,
              "extra": sorted((extra or {}).keys())}
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for name, arr in sorted(state.arrays().items()):
        arrays[f"koopman/{name}"] = arr
    for name, arr in sorted((extra or {}).items()):
        arrays[name] = np.asarray(arr)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_state(path) -> tuple[KoopmanState, dict, dict[str, np.ndarray]]:
    """Inverse of :func:`save_state`: ``(state, header, extra_arrays)``."""
    with np.load(path, allow_pickle=False) as npz:
        header = json.loads(bytes(npz["header"]).decode())
        arrays = {k[len("koopman/"):]: npz[k] for k in npz.files if k.startswith("koopman/")}
        extra = {k: npz[k] for k in header["extra"]}
    return KoopmanState.from_arrays(header["architecture"], arrays), header, extra
