"""Frequency-domain split of parameter trajectories.

A trajectory is a ``(T, D)`` array: one flattened parameter vector per
domain, rows in chronological order. The transform runs along the time
axis with the real-input half-spectrum layout, so there are
``T // 2 + 1`` frequency bins. Bins are ranked by their magnitude averaged
over parameter dimensions and the top ``ceil(tau * n_freq)`` bins form the
dominant (low) band; every other bin is the residual (high) band.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidConfigError, InvalidInputError, ShapeError

__all__ = [
    "Spectrum",
    "FrequencyMask",
    "Decomposition",
    "check_trajectory",
    "dft_forward",
    "spectral_magnitudes",
    "select_top_frequencies",
    "decompose",
    "lowpass_operator",
    "SpectralDecomposer",
    "write_decomposition_dump",
]


@dataclass(frozen=True)
class Spectrum:
    coeffs: np.ndarray  # complex, (n_freq, D)
    t_original: int

    @property
    def n_freq(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class FrequencyMask:
    selected: tuple[int, ...]
    n_freq: int
    tau: float

    @property
    def q(self) -> int:
        return len(self.selected)

    def as_array(self) -> np.ndarray:
        b = np.zeros(self.n_freq)
        b[list(self.selected)] = 1.0
        return b


@dataclass(frozen=True)
class Decomposition:
    low: np.ndarray
    high: np.ndarray
    mask: FrequencyMask


def n_freq_bins(t: int) -> int:
    return t // 2 + 1


def check_trajectory(trajectory, min_length: int = 1) -> np.ndarray:
    """Return ``trajectory`` as a finite float64 ``(T, D)`` array.

    A 1-D input is treated as a single parameter dimension.
    """
    theta = np.asarray(trajectory, dtype=np.float64)
    if theta.ndim == 1:
        theta = theta[:, None]
    if theta.ndim != 2:
        raise ShapeError(f"trajectory must be 2-D (T, D), got shape {theta.shape}")
    if theta.shape[0] < min_length:
        raise InvalidInputError(
            f"trajectory needs at least {min_length} timesteps, got {theta.shape[0]}"
        )
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("trajectory contains non-finite entries")
    return theta


def dft_forward(trajectory) -> Spectrum:
    """Unnormalized DFT along time, half-spectrum layout.

    ``coeffs[f, d] = sum_t theta[t, d] * exp(-2j*pi*f*t/T)`` for
    ``t = 0..T-1`` and ``f = 0..T//2``.
    """
    theta = check_trajectory(trajectory, min_length=1)
    t = theta.shape[0]
    return Spectrum(coeffs=np.fft.rfft(theta, axis=0), t_original=t)


def spectral_magnitudes(spectrum: Spectrum) -> np.ndarray:
    """Mean modulus of each frequency bin across parameter dimensions."""
    coeffs = np.asarray(spectrum.coeffs)
    if coeffs.ndim != 2:
        raise ShapeError(f"spectrum coefficients must be 2-D, got {coeffs.shape}")
    if not np.all(np.isfinite(coeffs)):
        raise InvalidInputError("spectrum contains non-finite coefficients")
    return np.abs(coeffs).mean(axis=1)


def select_top_frequencies(magnitudes, tau: float) -> FrequencyMask:
    """Keep the ``ceil(tau * n_freq)`` strongest bins.

    Ties are broken toward the lower frequency index (stable descending
    sort). ``tau == 0`` yields an empty selection and a warning.
    """
    tau = float(tau)
    if not 0.0 <= tau <= 1.0 or math.isnan(tau):
        raise InvalidConfigError(f"tau must lie in [0, 1], got {tau}")
    m = np.asarray(magnitudes, dtype=np.float64).ravel()
    n_freq = m.size
    q = math.ceil(tau * n_freq)
    if q == 0:
        warnings.warn("tau=0 selects no frequency bins; the low band is identically zero",
                      RuntimeWarning, stacklevel=2)
    order = np.argsort(-m, kind="stable")
    selected = tuple(sorted(int(i) for i in order[:q]))
    return FrequencyMask(selected=selected, n_freq=n_freq, tau=tau)


def _split_spectrum(spectrum: Spectrum, mask: FrequencyMask) -> tuple[np.ndarray, np.ndarray]:
    b = mask.as_array()[:, None]
    t = spectrum.t_original
    low = np.fft.irfft(spectrum.coeffs * b, n=t, axis=0)
    high = np.fft.irfft(spectrum.coeffs * (1.0 - b), n=t, axis=0)
    return low, high


def decompose(trajectory, tau: float, mask: FrequencyMask | None = None) -> Decomposition:
    """Split a trajectory into dominant and residual time-domain parts.

    Parameters
    ----------
    trajectory : array-like of shape (T, D)
        Needs ``T >= 2``.
    tau : float
        Fraction of frequency bins kept in the dominant band.
    mask : FrequencyMask, optional
        Reuse a previously selected set of bins instead of ranking again.

    Returns
    -------
    Decomposition
        ``low + high`` reproduces the input up to round-off.
    """
    theta = check_trajectory(trajectory, min_length=2)
    spectrum = dft_forward(theta)
    if mask is None:
        mask = select_top_frequencies(spectral_magnitudes(spectrum), tau)
    elif mask.n_freq != spectrum.n_freq:
        raise ShapeError(f"mask has {mask.n_freq} bins, trajectory needs {spectrum.n_freq}")
    low, high = _split_spectrum(spectrum, mask)
    return Decomposition(low=low, high=high, mask=mask)


def lowpass_operator(t: int, mask: FrequencyMask) -> np.ndarray:
    """Real ``(T, T)`` matrix ``P`` with ``low = P @ trajectory`` for this mask.

    The band split is linear in the trajectory once the mask is fixed, so
    the trainer applies it as a matrix product and differentiates through it.
    """
    if mask.n_freq != n_freq_bins(t):
        raise ShapeError(f"mask has {mask.n_freq} bins, T={t} needs {n_freq_bins(t)}")
    eye = np.eye(t)
    return np.fft.irfft(np.fft.rfft(eye, axis=0) * mask.as_array()[:, None], n=t, axis=0)


class SpectralDecomposer(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`decompose`.

    ``fit`` ranks the bins of a training trajectory; ``transform`` returns
    the dominant band of any trajectory with the same length, using the
    fitted bins. ``transform_residual`` returns the other band.
    """

    def __init__(self, tau=0.9):
        self.tau = tau

    def fit(self, X, y=None):
        theta = check_trajectory(X, min_length=2)
        spectrum = dft_forward(theta)
        self.magnitudes_ = spectral_magnitudes(spectrum)
        self.mask_ = select_top_frequencies(self.magnitudes_, self.tau)
        self.n_timesteps_ = theta.shape[0]
        self.n_features_in_ = theta.shape[1]
        return self

    def _decompose(self, X):
        check_is_fitted(self, "mask_")
        theta = check_trajectory(X, min_length=2)
        if theta.shape[0] != self.n_timesteps_:
            raise ShapeError(
                f"fitted on T={self.n_timesteps_} timesteps, got {theta.shape[0]}"
            )
        return decompose(theta, self.tau, mask=self.mask_)

    def transform(self, X):
        return self._decompose(X).low

    def transform_residual(self, X):
        return self._decompose(X).high

    def inverse_transform(self, X_low, X_high=None):
        low = np.asarray(X_low, dtype=np.float64)
        return low if X_high is None else low + np.asarray(X_high, dtype=np.float64)


def write_decomposition_dump(path, trajectory, decomposition: Decomposition,
                             reconstructed=None) -> None:
    """Write the dimension-averaged trajectory components, one row per timestep.

    ``reconstructed`` defaults to ``low + high``. Rows where it is NaN (for
    example the first step of a one-step-ahead prediction) are written as
    ``nan``.
    """
    theta = check_trajectory(trajectory, min_length=2)
    if reconstructed is None:
        reconstructed = decomposition.low + decomposition.high
    recon = np.asarray(reconstructed, dtype=np.float64)
    if recon.shape != theta.shape:
        raise ShapeError(f"reconstructed shape {recon.shape} != trajectory shape {theta.shape}")
    cols = (theta.mean(axis=1), decomposition.low.mean(axis=1),
            decomposition.high.mean(axis=1), recon.mean(axis=1))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_raw", "mean_low", "mean_high", "mean_reconstructed"])
        for t in range(theta.shape[0]):
            w.writerow([t + 1] + [repr(float(c[t])) for c in cols])
