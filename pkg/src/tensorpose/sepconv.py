"""Separable component-wise convolution over factorized tensors.

Filtering a decomposed tensor = 1D-filtering every vector component and
2D-filtering every matrix component (two 1D passes), leaving feature vectors
untouched.  For zero-padded same convolution this composition equals the
brute-force dense 3D convolution exactly, because each axis convolves
independently through the outer products — that identity is what
`brute_force_conv3d` is here to witness.

Module-level counters instrument how often filtering actually runs, so tests
can assert that a FilteredView is built once per kernel change and reused
across all samples of an iteration.
"""

from dataclasses import dataclass
import time
import warnings

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .kernels import GaussianKernel1D
from .tensorfield import (DENSE_CAP, FeatureTensor3D, Tensor2DFactorized,
                          VMTensor3D)

# Instrumentation: bumped on every FilteredView build / 1D pass.
FILTER_BUILDS = 0
CONV1D_PASSES = 0


def _kernel_weights(kernel) -> np.ndarray:
    w = kernel.weights if isinstance(kernel, GaussianKernel1D) else np.asarray(kernel, float)
    if w.ndim != 1 or w.size % 2 == 0:
        raise ValueError("kernel must be 1-D with odd length")
    return w


def convolve_same_1d(signal, kernel) -> np.ndarray:
    """Zero-padded same-size true convolution of a 1-D signal."""
    signal = np.asarray(signal, dtype=float)
    if signal.size == 0:
        raise ValueError("empty signal")
    global CONV1D_PASSES
    CONV1D_PASSES += 1
    return ad.conv1d_same(Tensor(signal), _kernel_weights(kernel)).value


def convolve_same_2d(matrix, kernel) -> np.ndarray:
    """Separable 2D filtering: one 1D pass per axis with the same kernel."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        raise ValueError("empty matrix")
    out = _conv_last(Tensor(matrix), _kernel_weights(kernel))
    out = _conv_second_last(out, _kernel_weights(kernel))
    return out.value


def _conv_last(t: Tensor, w: np.ndarray) -> Tensor:
    global CONV1D_PASSES
    CONV1D_PASSES += 1
    return ad.conv1d_same(t, w)


def _conv_second_last(t: Tensor, w: np.ndarray) -> Tensor:
    axes = list(range(t.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return ad.transpose(_conv_last(ad.transpose(t, tuple(axes)), w), tuple(axes))


@dataclass
class FilteredView:
    """Filtered components for one (tensor, kernel) pair.

    `field` has the same type and component shapes as `source` but holds the
    filtered components (graph nodes when the source components are trainable
    leaves, so gradients flow back through the filtering).  Sampling goes
    through the field's ordinary interpolation.
    """

    source: object
    sigma: float
    field: object

    def sample(self, *coords) -> Tensor:
        return self.field.sample(*coords)

    def sample_feature(self, *coords) -> Tensor:
        return self.field.sample_feature(*coords)


def _warn_if_kernel_oversized(kernel_len: int, dims) -> None:
    smallest = min(dims)
    if kernel_len > smallest:
        warnings.warn(
            f"kernel length {kernel_len} exceeds smallest tensor dim "
            f"{smallest}; borders are zero-padded", RuntimeWarning)


def filter_components_2d(t: Tensor2DFactorized, kernel) -> FilteredView:
    global FILTER_BUILDS
    FILTER_BUILDS += 1
    if isinstance(kernel, GaussianKernel1D) and kernel.is_impulse:
        return FilteredView(t, kernel.sigma, t)
    w = _kernel_weights(kernel)
    _warn_if_kernel_oversized(w.size, (t.width, t.height))
    sigma = kernel.sigma if isinstance(kernel, GaussianKernel1D) else float("nan")
    field = t.replace_components(_conv_last(t.vx, w), _conv_last(t.vy, w))
    return FilteredView(t, sigma, field)


def filter_components_3d(t: VMTensor3D, kernel) -> FilteredView:
    """1D-filter vector components, 2D-filter matrix components.

    Feature vectors (b) pass through untouched — they carry no spatial axis.
    """
    global FILTER_BUILDS
    FILTER_BUILDS += 1
    if isinstance(kernel, GaussianKernel1D) and kernel.is_impulse:
        return FilteredView(t, kernel.sigma, t)
    w = _kernel_weights(kernel)
    _warn_if_kernel_oversized(w.size, t.dims)
    sigma = kernel.sigma if isinstance(kernel, GaussianKernel1D) else float("nan")

    def mat2d(m):
        return _conv_second_last(_conv_last(m, w), w)

    base = VMTensor3D.replace_components(
        t, _conv_last(t.vx, w), _conv_last(t.vy, w), _conv_last(t.vz, w),
        mat2d(t.m_yz), mat2d(t.m_xz), mat2d(t.m_xy))
    if isinstance(t, FeatureTensor3D):
        field = FeatureTensor3D(base.dims, base.rank, base.vx, base.vy,
                                base.vz, base.m_yz, base.m_xz, base.m_xy,
                                gdim=t.gdim, bx=t.bx, by=t.by, bz=t.bz)
    else:
        field = base
    return FilteredView(t, sigma, field)


def brute_force_conv3d(dense: np.ndarray, kernel3d: np.ndarray) -> np.ndarray:
    """Direct zero-padded same 3D convolution, O(I*J*K*L^3).

    The reference arm: loops over every kernel tap and accumulates the
    correspondingly shifted input block.  No separability is used.
    """
    dense = np.asarray(dense, dtype=float)
    kernel3d = np.asarray(kernel3d, dtype=float)
    if dense.size > DENSE_CAP:
        raise ValueError("dense input exceeds memory cap")
    if kernel3d.ndim != 3 or len(set(kernel3d.shape)) != 1 or kernel3d.shape[0] % 2 == 0:
        raise ValueError("kernel3d must be cubic with odd side")
    ni, nj, nk = dense.shape
    length = kernel3d.shape[0]
    c = length // 2
    padded = np.zeros((ni + 2 * c, nj + 2 * c, nk + 2 * c))
    padded[c:c + ni, c:c + nj, c:c + nk] = dense
    out = np.zeros_like(dense)
    for a in range(length):
        for b in range(length):
            for d in range(length):
                w = kernel3d[a, b, d]
                if w == 0.0:
                    continue
                out += w * padded[2 * c - a:2 * c - a + ni,
                                  2 * c - b:2 * c - b + nj,
                                  2 * c - d:2 * c - d + nk]
    return out


def op_counts(dims, rank: int, kernel_len: int) -> dict:
    """Closed-form multiply counts for the two filtering routes."""
    i, j, k = dims
    brute = i * j * k * kernel_len ** 3
    sep_mats = 2 * rank * kernel_len * (j * k + i * k + i * j)
    sep_vecs = rank * kernel_len * (i + j + k)
    return {"ops_brute": brute, "ops_sep": sep_mats + sep_vecs,
            "ops_ratio": brute / (sep_mats + sep_vecs)}


def bench_compare(dims, rank: int, kernel_len: int, reps: int = 5,
                  rng=None) -> dict:
    """Timing comparison: component-wise filtering vs the brute-force arm.

    Both arms produce the filtered volume in their own representation; the
    brute-force arm starts from a precomputed dense tensor (reconstruction
    is not charged to either side).  Medians over `reps` runs.
    """
    from .kernels import make_kernel_1d

    rng = rng or np.random.default_rng(0)
    t = VMTensor3D.random(dims, rank, scale=0.5, rng=rng)
    sigma = kernel_len / 6.0
    k1 = make_kernel_1d(sigma, kernel_len)
    k3 = np.einsum("a,b,c->abc", k1.weights, k1.weights, k1.weights)
    dense = t.reconstruct_dense()

    t_sep, t_brute = [], []
    view = None
    brute = None
    for _ in range(reps):
        t0 = time.perf_counter()
        view = filter_components_3d(t, k1)
        t_sep.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        brute = brute_force_conv3d(dense, k3)
        t_brute.append(time.perf_counter() - t0)

    report = {"dims": "x".join(str(d) for d in dims), "rank": rank,
              "kernel_len": kernel_len, "reps": reps,
              "t_sep_median_s": float(np.median(t_sep)),
              "t_brute_median_s": float(np.median(t_brute)),
              "max_abs_err": float(
                  np.abs(view.field.reconstruct_dense() - brute).max())}
    report["speedup"] = report["t_brute_median_s"] / report["t_sep_median_s"]
    report.update(op_counts(dims, rank, kernel_len))
    return report
