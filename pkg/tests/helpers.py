"""Shared oracle helpers for the test suite.

Everything here is written independently of the library code paths it
checks: plain loops and textbook formulas, no calls into the modules under
test beyond constructing their inputs.
"""

import numpy as np

from tensorpose.autodiff import Tensor


def numeric_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        x0 = flat[i]
        step = h * (1.0 + abs(x0))
        flat[i] = x0 + step
        fp = fn(x)
        flat[i] = x0 - step
        fm = fn(x)
        flat[i] = x0
        gflat[i] = (fp - fm) / (2.0 * step)
    return g


def check_unary(op, x, tol=1e-6, scalar_fn=None):
    """FD-check a tape op against its numpy forward on one input."""
    leaf = Tensor(np.array(x, dtype=float), requires_grad=True)
    out = op(leaf)
    out.sum().backward()

    def f(arr):
        return float(op(Tensor(arr)).value.sum())

    num = numeric_grad(f, np.array(x, dtype=float))
    np.testing.assert_allclose(leaf.grad, num, rtol=tol, atol=tol)
    if scalar_fn is not None:
        expect = np.vectorize(scalar_fn)(np.asarray(x, dtype=float))
        np.testing.assert_allclose(out.value, expect, rtol=1e-12, atol=1e-12)


def conv_same_oracle_1d(signal: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded centered same convolution, written as the obvious loop."""
    n = len(signal)
    half = len(kernel) // 2
    out = np.zeros(n)
    for i in range(n):
        for a, w in enumerate(kernel):
            j = i - (a - half)
            if 0 <= j < n:
                out[i] += w * signal[j]
    return out


def conv_same_oracle_2d(img: np.ndarray, kernel2d: np.ndarray) -> np.ndarray:
    h, w = img.shape
    kh, kw = kernel2d.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros_like(img, dtype=float)
    for i in range(h):
        for j in range(w):
            for a in range(kh):
                for b in range(kw):
                    si = i - (a - ch)
                    sj = j - (b - cw)
                    if 0 <= si < h and 0 <= sj < w:
                        out[i, j] += kernel2d[a, b] * img[si, sj]
    return out


def conv_same_oracle_3d(vol: np.ndarray, kernel3d: np.ndarray) -> np.ndarray:
    """Sextuple loop; only for tiny volumes."""
    ni, nj, nk = vol.shape
    la, lb, lc = kernel3d.shape
    ca, cb, cc = la // 2, lb // 2, lc // 2
    out = np.zeros_like(vol, dtype=float)
    for i in range(ni):
        for j in range(nj):
            for k in range(nk):
                acc = 0.0
                for a in range(la):
                    for b in range(lb):
                        for c in range(lc):
                            si, sj, sk = i - (a - ca), j - (b - cb), k - (c - cc)
                            if 0 <= si < ni and 0 <= sj < nj and 0 <= sk < nk:
                                acc += kernel3d[a, b, c] * vol[si, sj, sk]
                out[i, j, k] = acc
    return out


def trilinear_oracle(dense: np.ndarray, x, y, z) -> np.ndarray:
    """Clamp-to-border trilinear interpolation of a dense volume."""
    ni, nj, nk = dense.shape
    out = np.zeros(len(x))
    for p in range(len(x)):
        xc = min(max(x[p], 0.0), ni - 1.0)
        yc = min(max(y[p], 0.0), nj - 1.0)
        zc = min(max(z[p], 0.0), nk - 1.0)
        i0 = min(int(np.floor(xc)), ni - 2)
        j0 = min(int(np.floor(yc)), nj - 2)
        k0 = min(int(np.floor(zc)), nk - 2)
        fx, fy, fz = xc - i0, yc - j0, zc - k0
        acc = 0.0
        for di, wi in ((0, 1 - fx), (1, fx)):
            for dj, wj in ((0, 1 - fy), (1, fy)):
                for dk, wk in ((0, 1 - fz), (1, fz)):
                    acc += wi * wj * wk * dense[i0 + di, j0 + dj, k0 + dk]
        out[p] = acc
    return out


def bilinear_oracle(dense: np.ndarray, x, y) -> np.ndarray:
    """Clamp-to-border bilinear interpolation; dense is (W, H) per channel."""
    ni, nj = dense.shape
    out = np.zeros(len(x))
    for p in range(len(x)):
        xc = min(max(x[p], 0.0), ni - 1.0)
        yc = min(max(y[p], 0.0), nj - 1.0)
        i0 = min(int(np.floor(xc)), ni - 2)
        j0 = min(int(np.floor(yc)), nj - 2)
        fx, fy = xc - i0, yc - j0
        out[p] = ((1 - fx) * (1 - fy) * dense[i0, j0]
                  + (1 - fx) * fy * dense[i0, j0 + 1]
                  + fx * (1 - fy) * dense[i0 + 1, j0]
                  + fx * fy * dense[i0 + 1, j0 + 1])
    return out
