"""Image quality metrics."""

import numpy as np
from skimage.metrics import structural_similarity

PSNR_CAP = 99.0


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 for exact matches."""
    mse = float(np.mean((np.asarray(a, float) - np.asarray(b, float)) ** 2))
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak * peak / mse))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity for [0,1] images (channel-last when 3D)."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    kwargs = {"data_range": 1.0}
    if a.ndim == 3:
        kwargs["channel_axis"] = -1
    return float(structural_similarity(a, b, **kwargs))
