"""Extrapolate per-domain model parameters to an unseen future domain.

The trajectory of per-domain parameters is split by a DFT into a dominant
low-frequency band and a residual high-frequency band; the low band is
advanced by a learned linear operator in a latent space and the high band
is carried forward under a smoothness penalty.
"""

from .estimators import BaselineClassifier, BaselineRegressor, FreKooClassifier, FreKooRegressor
from .spectral import SpectralDecomposer, decompose
from .trainer import TrainConfig, train_frekoo

__all__ = [
    "BaselineClassifier",
    "BaselineRegressor",
    "FreKooClassifier",
    "FreKooRegressor",
    "SpectralDecomposer",
    "TrainConfig",
    "decompose",
    "train_frekoo",
]
__version__ = "0.1.0"
