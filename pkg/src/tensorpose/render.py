"""Discretized volume rendering and the small appearance decoder.

The render path is one differentiable graph: pose tangent -> rays -> sample
points -> grid coords -> component-wise field samples -> decoder -> emission
weights -> composited color.  Transmittance uses the exclusive partial sum
T_n = exp(-sum_{j<n} delta_j sigma_j), which makes the compositing weights a
probability partition: sum_n T_n alpha_n + T_{N+1} = 1 identically.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .geometry import camera_rays, ray_deltas, sample_depths

# Frequencies for the fixed sinusoidal view-direction encoding.
DIR_ENC_FREQS = (1.0, 2.0, 4.0, 8.0)
DIR_ENC_DIM = 3 * 2 * len(DIR_ENC_FREQS)


@dataclass
class RenderConfig:
    n_samples: int = 64
    near: float = 0.5
    far: float = 4.5
    white_background: bool = True
    background: tuple = None  # overrides the white/black flag when set
    density_shift: float = -10.0
    bounds_lo: tuple = (-1.0, -1.0, -1.0)
    bounds_hi: tuple = (1.0, 1.0, 1.0)

    def effective_background(self) -> np.ndarray:
        if self.background is not None:
            return np.asarray(self.background, dtype=float)
        return np.ones(3) if self.white_background else np.zeros(3)


class MLPDecoder:
    """Two-layer feature decoder; view direction enters at the last layer."""

    def __init__(self, feature_dim: int, hidden: int = 32, rng=None,
                 dtype=np.float64):
        rng = rng or np.random.default_rng(0)

        def draw(rows, cols, fan_in):
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (rows, cols))
            return ad.leaf(w.astype(dtype))

        self.feature_dim = feature_dim
        self.hidden = hidden
        self.w1 = draw(hidden, feature_dim, feature_dim)
        self.b1 = ad.leaf(np.zeros(hidden, dtype=dtype))
        self.w2 = draw(3, hidden + DIR_ENC_DIM, hidden + DIR_ENC_DIM)
        self.b2 = ad.leaf(np.zeros(3, dtype=dtype))

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]


def encode_direction(dirs) -> Tensor:
    """(3, S) unit directions -> (DIR_ENC_DIM, S) sinusoidal features."""
    dirs = as_tensor(dirs)
    parts = []
    for freq in DIR_ENC_FREQS:
        scaled = dirs * float(freq)
        parts.append(ad.sin(scaled))
        parts.append(ad.cos(scaled))
    return ad.concatenate(parts, axis=0)


def decode_color(decoder: MLPDecoder, features, dirs_unit) -> Tensor:
    """(G, S) features + (3, S) unit dirs -> (3, S) rgb in [0,1]."""
    features = as_tensor(features)
    dirs_unit = as_tensor(dirs_unit)
    if not (np.isfinite(features.value).all() and np.isfinite(dirs_unit.value).all()):
        raise ValueError("non-finite decoder input")
    hidden = ad.relu(decoder.w1 @ features + ad.reshape(decoder.b1, (-1, 1)))
    last_in = ad.concatenate([hidden, encode_direction(dirs_unit)], axis=0)
    raw = decoder.w2 @ last_in + ad.reshape(decoder.b2, (-1, 1))
    return ad.sigmoid(raw)


def density_activation(raw, shift: float) -> Tensor:
    """Nonnegative density from signed tensor samples: softplus(raw + shift).

    The negative shift puts zero-initialized (empty) space at ~e^{shift}
    density instead of softplus(0) fog.
    """
    return ad.softplus(as_tensor(raw) + shift)


def volume_render(densities, colors, deltas, background):
    """Composite along rays.

    densities: (B, N) nonnegative (already activated), colors: (B, N, 3),
    deltas: (B, N) constant, background: (3,).
    Returns (color (B, 3), weights (B, N), t_final (B,)).
    """
    densities = as_tensor(densities)
    colors = as_tensor(colors)
    b, n = densities.shape
    tau = densities * np.asarray(deltas, dtype=densities.dtype)
    cum = ad.cumsum(tau, axis=1)
    t_excl = ad.exp(tau - cum)  # exp(-(cum - tau)), exclusive transmittance
    alpha = 1.0 - ad.exp(-tau)
    weights = t_excl * alpha
    t_final = ad.exp(-cum[:, -1])
    color = (ad.reshape(weights, (b, n, 1)) * colors).sum(axis=1)
    bg = np.asarray(background, dtype=float).reshape(1, 3)
    color = color + ad.reshape(t_final, (b, 1)) * Tensor(bg)
    return color, weights, t_final


def world_to_grid(flat_pts, dims, cfg: RenderConfig):
    """(3, S) world points -> per-axis continuous grid coords."""
    coords = []
    for axis in range(3):
        lo = cfg.bounds_lo[axis]
        hi = cfg.bounds_hi[axis]
        scale = (dims[axis] - 1) / (hi - lo)
        coords.append((flat_pts[axis] - lo) * scale)
    return coords


def render_rays(density_field, feature_field, decoder, pose_xi, intrinsics,
                pixels, cfg: RenderConfig):
    """Differentiable color for a batch of pixels (2, B) -> (B, 3).

    `density_field` / `feature_field` may be raw tensors or FilteredViews —
    anything exposing sample / sample_feature and `.field.dims` or `.dims`.
    Rays that miss the occupied volume composite to the background because
    clamped border samples decode to (near-)zero density.
    """
    dims_d = getattr(density_field, "field", density_field).dims
    dims_f = getattr(feature_field, "field", feature_field).dims
    b = pixels.shape[1]
    n = cfg.n_samples
    origin, dirs = camera_rays(pose_xi, intrinsics, pixels)
    t = sample_depths(cfg.near, cfg.far, n)
    deltas = np.broadcast_to(
        ray_deltas(dirs.value, cfg.near, cfg.far, n)[:, None], (b, n))

    pts = ad.reshape(origin, (3, 1, 1)) + \
        ad.reshape(dirs, (3, b, 1)) * Tensor(t.reshape(1, 1, n))
    flat = ad.reshape(pts, (3, b * n))

    xd, yd, zd = world_to_grid(flat, dims_d, cfg)
    sigma_raw = density_field.sample(xd, yd, zd)
    density = ad.reshape(density_activation(sigma_raw, cfg.density_shift), (b, n))

    if dims_f == dims_d:
        xf, yf, zf = xd, yd, zd
    else:
        xf, yf, zf = world_to_grid(flat, dims_f, cfg)
    features = feature_field.sample_feature(xf, yf, zf)

    per_sample = np.repeat(np.arange(b), n)
    dirs_s = ad.take_last(dirs, per_sample)
    norm = ad.sqrt((dirs_s * dirs_s).sum(axis=0, keepdims=True))
    rgb = decode_color(decoder, features, dirs_s / norm)
    rgb_bn3 = ad.reshape(ad.transpose(rgb, (1, 0)), (b, n, 3))

    color, _, _ = volume_render(density, rgb_bn3, deltas,
                                cfg.effective_background())
    return color


def render_image(density_field, feature_field, decoder, pose_xi, intrinsics,
                 width: int, height: int, cfg: RenderConfig,
                 batch: int = 1024) -> np.ndarray:
    """(height, width, 3) ndarray render; deterministic pixel order."""
    ys, xs = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    pixels = np.stack([xs.ravel(), ys.ravel()]).astype(float)
    out = np.empty((height * width, 3))
    for lo in range(0, pixels.shape[1], batch):
        chunk = pixels[:, lo:lo + batch]
        color = render_rays(density_field, feature_field, decoder,
                            as_tensor(np.asarray(pose_xi)), intrinsics, chunk, cfg)
        out[lo:lo + chunk.shape[1]] = color.value
    return out.reshape(height, width, 3)
