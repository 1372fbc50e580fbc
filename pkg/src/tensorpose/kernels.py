"""Discrete Gaussian kernels with continuously variable width, and the
coarse-to-fine width schedule.

Kernel weights are clamped pdf samples, min(1, pdf(x; sigma)), with no
renormalization by default: a kernel of width sigma below the impulse
threshold degenerates to the discrete impulse, so "no filtering" is the
sigma -> 0 limit of the same code path.
"""

from dataclasses import dataclass
import math

import numpy as np

# Width below which the kernel is the exact discrete impulse.
IMPULSE_THRESHOLD = 1e-4


@dataclass(frozen=True)
class GaussianKernel1D:
    sigma: float
    length: int
    weights: np.ndarray

    @property
    def is_impulse(self) -> bool:
        return self.sigma < IMPULSE_THRESHOLD


@dataclass(frozen=True)
class KernelSchedule:
    """Exponentially decaying width with a hard cutoff.

    sigma(step) = sigma0 * 2^(-step/half_life) for step < cutoff_step, and
    exactly 0 from cutoff_step on.
    """

    sigma0: float
    cutoff_step: int
    half_life: float
    random_scaling: bool = False


def default_length(sigma: float, max_length: int = 101) -> int:
    """Odd tap count covering +-3 sigma, clamped to max_length."""
    if max_length % 2 == 0:
        max_length -= 1
    if sigma < IMPULSE_THRESHOLD:
        return 1
    return min(2 * math.ceil(3.0 * sigma) + 1, max_length)


def make_kernel_1d(sigma: float, length: int) -> GaussianKernel1D:
    """Clamped-pdf Gaussian taps at integer offsets from the center.

    weights[i] = min(1, pdf(i - (length-1)/2; sigma)); the impulse when
    sigma < 1e-4.  No renormalization (see make_kernel_1d_normalized).
    """
    if length % 2 == 0 or length < 1:
        raise ValueError(f"kernel length must be odd and >= 1, got {length}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    half = length // 2
    if sigma < IMPULSE_THRESHOLD:
        weights = np.zeros(length)
        weights[half] = 1.0
    else:
        x = np.arange(-half, half + 1, dtype=float)
        pdf = np.exp(-0.5 * (x / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)
        weights = np.minimum(1.0, pdf)
    return GaussianKernel1D(sigma=float(sigma), length=length, weights=weights)


def make_kernel_1d_normalized(sigma: float, length: int) -> GaussianKernel1D:
    """Optional unit-mass variant (off by default everywhere)."""
    k = make_kernel_1d(sigma, length)
    return GaussianKernel1D(k.sigma, k.length, k.weights / k.weights.sum())


def make_kernel_2d(sigma: float, length: int) -> np.ndarray:
    """Rank-1 separable 2D kernel: outer product of the 1D kernel with itself."""
    k1 = make_kernel_1d(sigma, length).weights
    return np.outer(k1, k1)


def schedule_sigma(schedule: KernelSchedule, step: int) -> float:
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if step >= schedule.cutoff_step:
        return 0.0
    return schedule.sigma0 * 2.0 ** (-step / schedule.half_life)


def sample_kernel_scale(rng: np.random.Generator) -> float:
    """Uniform [0,1] width multiplier for the randomly scaled kernels."""
    return float(rng.uniform(0.0, 1.0))
