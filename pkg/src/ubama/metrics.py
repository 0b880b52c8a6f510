"""Image and matrix quality metrics."""

import math

import numpy as np
from scipy.signal import convolve2d

__all__ = ["snr", "ssim", "relative_error", "gaussian_window"]


def snr(reference, estimate):
    """Signal-to-noise ratio ``20 log10(||x|| / ||x_est - x||)`` in dB.

    Returns ``inf`` when the estimate equals the reference exactly.
    """
    x = np.asarray(reference, dtype=float)
    e = np.asarray(estimate, dtype=float)
    if x.shape != e.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {e.shape}")
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ValueError("SNR is undefined for a zero reference")
    err = np.linalg.norm(e - x)
    if err == 0:
        return math.inf
    return float(20.0 * np.log10(nx / err))


def relative_error(estimate, reference):
    """``||estimate - reference||_F / ||reference||_F``."""
    ref = np.asarray(reference, dtype=float)
    den = np.linalg.norm(ref)
    if den == 0:
        raise ValueError("relative error against a zero reference")
    return float(np.linalg.norm(np.asarray(estimate, dtype=float) - ref) / den)


def gaussian_window(size=11, sigma=1.5):
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t[:, None] ** 2 + t[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def ssim(reference, estimate, data_range=1.0, K1=0.01, K2=0.03, win_size=11, sigma=1.5):
    """Mean structural similarity over all fully contained windows.

    Local statistics use an ``11 x 11`` Gaussian window (``sigma = 1.5``) and
    'valid' filtering; the stabilizers are ``(K1 L)^2`` and ``(K2 L)^2``.
    """
    x = np.asarray(reference, dtype=float)
    y = np.asarray(estimate, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if x.ndim != 2 or min(x.shape) < win_size:
        raise ValueError(f"need 2D images of side >= {win_size}, got {x.shape}")
    w = gaussian_window(win_size, sigma)
    C1 = (K1 * data_range) ** 2
    C2 = (K2 * data_range) ** 2

    def filt(a):
        return convolve2d(a, w, mode="valid")

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + C1) * (2 * sxy + C2)
    den = (mx * mx + my * my + C1) * (sxx + syy + C2)
    return float(np.mean(num / den))
