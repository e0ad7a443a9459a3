import numpy as np
import pytest


def naive_dft(theta, one_based=False):
    """Direct double-sum half-spectrum DFT along axis 0."""
    theta = np.asarray(theta, dtype=np.float64)
    t = theta.shape[0]
    idx = np.arange(1, t + 1) if one_based else np.arange(t)
    out = np.zeros((t // 2 + 1, theta.shape[1]), dtype=complex)
    for f in range(t // 2 + 1):
        for s in range(t):
            out[f] += theta[s] * np.exp(-2j * np.pi * f * idx[s] / t)
    return out


def central_difference(fn, x, eps=1e-5):
    """Numerical gradient of a scalar function of a flat float64 array."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + eps
        up = fn(x)
        x.flat[i] = old - eps
        down = fn(x)
        x.flat[i] = old
        g.flat[i] = (up - down) / (2 * eps)
    return g


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(1e-12, np.max(np.abs(b))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def miniature_trainer(reduction="sum", seed=0):
    """T=4 source domains, a 10-parameter head (1 -> 2 -> 2), latent size 3."""
    import torch

    from frekoo.base_model import CLASSIFICATION, TaskHead
    from frekoo.trainer import JointTrainer, TrainConfig, _Domains, _warm_start, build_state

    rng = np.random.default_rng(seed)
    sources = []
    for t in range(4):
        X = rng.standard_normal((12, 1)) + 0.3 * t
        sources.append((X, (X[:, 0] > 0.3 * t).astype(np.int64)))
    head = TaskHead(1, (2,), 2, CLASSIFICATION)
    config = TrainConfig(tau=0.5, alpha=0.7, beta=1.3, gamma=0.9, m=3, coder_widths=(5,),
                         warm_start_steps=30, finetune_steps=10, loss_reduction=reduction, seed=seed)
    domains = _Domains.from_sources(sources, CLASSIFICATION)
    bank = _warm_start(head, domains, config)
    # break the warm-start smoothness so every band carries signal
    bank.thetas[:] += 0.3 * rng.standard_normal(bank.thetas.shape)
    trainer = JointTrainer(bank, build_state(head.n_params, config), domains, config)
    with torch.no_grad():
        trainer.state.k.add_(0.2 * torch.as_tensor(rng.standard_normal((3, 3))))
    return trainer


def objective_gradient_errors(trainer, eps=1e-5):
    """Relative error between autograd and central differences for every trainable tensor."""
    import torch

    mask = trainer.current_mask()
    tensors = {"bank": trainer.theta, "K": trainer.state.k}
    for name, p in trainer.state.named_parameters():
        if name != "k":
            tensors[name] = p
    for p in tensors.values():
        p.grad = None
    _, total, _ = trainer.objective(trainer.theta, mask)
    total.backward()
    errors = {}
    for name, p in tensors.items():
        base = p.detach().clone()

        def f(flat, p=p, base=base):
            with torch.no_grad():
                p.copy_(torch.as_tensor(flat.reshape(base.shape)))
                value = float(trainer.objective(trainer.theta, mask)[1])
                p.copy_(base)
            return value

        numeric = central_difference(f, base.numpy().ravel(), eps)
        errors[name] = relative_error(p.grad.numpy().ravel(), numeric)
    return errors
