"""Monte-Carlo suites for the latent stability bound and the random-walk gap."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .koopman import stability_bound_check
from .objective import map_equivalence_check, random_walk_constant

DEFAULT_SHAPES = ((2, 1), (5, 3), (9, 32), (16, 8), (37, 4))


def random_stable_operator(rng: np.random.Generator, m: int, rho_max: float = 0.98,
                           max_cond: float = 1e4) -> np.ndarray:
    """Real diagonalizable ``m x m`` matrix with spectral radius at most ``rho_max``.

    Eigenvalues are real or come in conjugate pairs (2x2 rotation-scaling
    blocks); the eigenbasis is a random Gaussian matrix redrawn until its
    condition number is below ``max_cond``.
    """
    blocks = np.zeros((m, m))
    i = 0
    while i < m:
        r = rho_max * rng.uniform(0.05, 1.0)
        if i + 1 < m and rng.random() < 0.5:
            a = rng.uniform(0, np.pi)
            blocks[i:i + 2, i:i + 2] = r * np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
            i += 2
        else:
            blocks[i, i] = r * rng.choice((-1.0, 1.0))
            i += 1
    while True:
        v = rng.standard_normal((m, m))
        if np.linalg.cond(v) < max_cond:
            return v @ blocks @ np.linalg.inv(v)


@dataclass
class StabilitySuiteResult:
    n_cases: int
    violations: int
    max_ratio: float
    seconds: float
    failures: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def stability_suite(n_cases: int = 1000, max_m: int = 16, rho_max: float = 0.98, h_max: int = 50,
                    seed: int = 0, rel_slack: float = 1e-8) -> StabilitySuiteResult:
    """Check the eigen-basis decay bound on random stable operators and start errors."""
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    violations, worst, failures = 0, 0.0, []
    for case in range(n_cases):
        m = int(rng.integers(1, max_m + 1))
        k = random_stable_operator(rng, m, rho_max)
        e0 = rng.standard_normal(m)
        h = int(rng.integers(1, h_max + 1))
        report = stability_bound_check(k, e0, h, rel_slack=rel_slack)
        worst = max(worst, max(meas / bound for _, meas, bound in report.horizon_bounds))
        if report.violations:
            violations += len(report.violations)
            failures.append(case)
    return StabilitySuiteResult(n_cases, violations, worst, time.perf_counter() - start, failures)


@dataclass
class GapSuiteResult:
    shape: tuple[int, int]
    sigma: float
    gaps: np.ndarray
    expected: float

    @property
    def spread(self) -> float:
        return float(self.gaps.max() - self.gaps.min())

    @property
    def error(self) -> float:
        return float(np.max(np.abs(self.gaps - self.expected)))

    def ok(self, tol: float = 1e-9) -> bool:
        return self.spread <= tol and self.error <= tol


def gap_suite(shapes=DEFAULT_SHAPES, n_sequences: int = 100, sigma: float = 1.0,
              seed: int = 0, scale: float = 1.0) -> list[GapSuiteResult]:
    """Gap between the Gaussian random-walk prior and the scaled penalty, per shape."""
    rng = np.random.default_rng(seed)
    out = []
    for t, m in shapes:
        gaps = np.array([map_equivalence_check(scale * rng.standard_normal((t, m)), sigma)[2]
                         for _ in range(n_sequences)])
        out.append(GapSuiteResult((t, m), sigma, gaps, random_walk_constant(t, m, sigma)))
    return out
