"""Image fidelity scoring for generated slices: MSE and SSIM.

SSIM uses the standard 11×11 Gaussian window (sigma 1.5) with
C1=(0.01)^2, C2=(0.03)^2 for unit dynamic range; local statistics are
computed with a valid-mode convolution so border padding never biases
the score.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .errors import ValidationError

_WIN = 11
_SIGMA = 1.5
_C1 = 0.01**2
_C2 = 0.03**2


def _gaussian_window() -> np.ndarray:
    half = (_WIN - 1) / 2.0
    coords = np.arange(_WIN) - half
    g = np.exp(-(coords**2) / (2.0 * _SIGMA**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


_KERNEL = _gaussian_window()


def _filter(x: np.ndarray) -> np.ndarray:
    return fftconvolve(x, _KERNEL, mode="valid")


def mse(real, fake) -> float:
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValidationError(f"shape mismatch: {real.shape} vs {fake.shape}")
    return float(((real - fake) ** 2).mean())


def ssim(real, fake) -> float:
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValidationError(f"shape mismatch: {real.shape} vs {fake.shape}")
    if min(real.shape) < _WIN:
        raise ValidationError(f"image smaller than the {_WIN}×{_WIN} SSIM window")
    mu_x = _filter(real)
    mu_y = _filter(fake)
    sigma_x = _filter(real * real) - mu_x**2
    sigma_y = _filter(fake * fake) - mu_y**2
    sigma_xy = _filter(real * fake) - mu_x * mu_y
    num = (2 * mu_x * mu_y + _C1) * (2 * sigma_xy + _C2)
    den = (mu_x**2 + mu_y**2 + _C1) * (sigma_x + sigma_y + _C2)
    return float((num / den).mean())


def fidelity_metrics(real, fake) -> dict[str, float]:
    """MSE and SSIM between a source slice and its translation, both in [0,1]."""
    return {"mse": mse(real, fake), "ssim": ssim(real, fake)}
