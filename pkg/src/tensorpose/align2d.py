"""Planar joint alignment: recover per-patch homographies and a rank-R
factorized image from overlapping observed patches.

Ground truth warps are crop placements composed with small random sl(3)
perturbations; the optimizer starts from the unperturbed crop placements, so
the thing to recover is the perturbation.  Patch 0 is the gauge anchor: its
warp is frozen at ground truth, which pins the content to the global frame.

Coordinates: patch pixels are mapped to [-patch/2, patch/2]/(size/2) around
the patch center, texture pixels to [-1, 1), so homography translation
coefficients are in half-image units and the warp-error threshold 0.01 is
sub-pixel.
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kernels import (KernelSchedule, default_length, make_kernel_1d,
                      schedule_sigma)
from .metrics import psnr
from .tensorfield import Tensor2DFactorized
from .sepconv import filter_components_2d
from .geometry import warp2d
from .optim import Adam
from .seeding import substream

# Relative std of each sl(3) generator in the ground-truth perturbations
# (translations x2, rotation, scales x2, shear, perspective x2).
PERTURB_PROFILE = np.array([1.0, 1.0, 0.6, 0.3, 0.3, 0.3, 0.08, 0.08])


@dataclass
class Align2DConfig:
    texture_size: int = 256
    patch_size: int = 64
    n_patches: int = 5
    rank: int = 8
    channels: int = 3
    iters: int = 1500
    init_scale: float = 0.01
    perturb_scale: float = 0.06
    lr_tensor: float = 0.02
    lr_pose: float = 5e-3
    pose_warmup: int = 250
    pose_gamma: float = 1.0
    gamma: float = 0.1
    sigma0: float = 12.0
    cutoff_step: int = 900
    half_life: float = 200.0
    max_kernel_length: int = 101
    smooth_supervision: bool = True
    log_every: int = 50
    dtype: str = "float32"


@dataclass
class PlanarProblem:
    texture: np.ndarray          # (size, size, C) in [0,1]
    patch_size: int
    coords: np.ndarray           # (2, P) normalized patch-local coords
    centers: list                # (cx, cy) texture-pixel patch centers
    gt_tangents: list            # sl(3) 8-vectors
    observations: list           # (C, P) float64 patch pixels


@dataclass
class PlanarState:
    field: Tensor2DFactorized
    warps: list                  # [0] is a constant Tensor, rest are leaves
    step: int = 0


def make_texture(size: int = 256, rng=None) -> np.ndarray:
    """Bundled procedural texture: checkers, blobs, strokes, gradients.

    Built from separable terms so its per-channel rank stays below the
    model rank; the fine checker period is what gives naive alignment its
    wrong-cell local minima.
    """
    rng = rng or np.random.default_rng(7)
    ax = np.arange(size) / (size - 1)
    sq_x = ((np.arange(size) // 16) % 2).astype(float)
    sq_y = ((np.arange(size) // 16) % 2).astype(float)
    checker = np.outer(sq_x, 1 - sq_y) + np.outer(1 - sq_x, sq_y)

    def blob(cx, cy, s):
        gx = np.exp(-0.5 * ((np.arange(size) - cx * size) / (s * size)) ** 2)
        gy = np.exp(-0.5 * ((np.arange(size) - cy * size) / (s * size)) ** 2)
        return np.outer(gx, gy)

    blobs = (blob(0.27, 0.35, 0.055) + blob(0.70, 0.23, 0.04)
             + blob(0.59, 0.74, 0.07) + blob(0.35, 0.66, 0.03))

    def strokes_1d(fractions):
        v = np.zeros(size)
        for f0, f1 in fractions:
            v[int(f0 * size):max(int(f1 * size), int(f0 * size) + 1)] = 1.0
        return v

    stroke_rows = strokes_1d([(0.23, 0.245), (0.55, 0.56), (0.78, 0.795)])
    stroke_cols = strokes_1d([(0.155, 0.165), (0.39, 0.40), (0.74, 0.75)])
    strokes = np.outer(stroke_rows, np.ones(size)) * 0.5 \
        + np.outer(np.ones(size), stroke_cols) * 0.5
    grad = np.outer(ax, np.ones(size)) * 0.5 + np.outer(np.ones(size), ax) * 0.5

    layers = [checker, blobs, strokes, grad]
    img = np.zeros((size, size, 3))
    mix = rng.uniform(0.2, 1.0, (len(layers), 3))
    for layer, weights in zip(layers, mix):
        img += layer[:, :, None] * weights[None, None, :]
    img -= img.min()
    img /= img.max()
    return img


def patch_grid(patch_size: int, texture_size: int) -> np.ndarray:
    """Normalized patch-local coordinates (2, P), centered at 0."""
    half = (patch_size - 1) / 2.0
    px, py = np.meshgrid(np.arange(patch_size), np.arange(patch_size),
                         indexing="ij")
    scale = texture_size / 2.0
    return np.stack([(px.ravel() - half) / scale, (py.ravel() - half) / scale])


def default_centers(texture_size: int, patch_size: int, n: int) -> list:
    """Five heavily overlapping placements (quincunx around the middle).

    Overlap is what couples the free warps to the gauge-anchored first
    patch: content seen through two warps pins their relative transform,
    so placements with mostly-private pixels leave the warps underdetermined.
    """
    mid = (texture_size - 1) / 2.0
    off = round(0.25 * patch_size)
    centers = [(mid, mid), (mid - off, mid - off), (mid + off, mid - off),
               (mid - off, mid + off), (mid + off, mid + off)]
    if n > len(centers):
        raise ValueError(f"at most {len(centers)} patches supported")
    return centers[:n]


def crop_tangent(center, texture_size: int) -> np.ndarray:
    """Pure-translation sl(3) tangent placing a patch at a texture center."""
    mid = (texture_size - 1) / 2.0
    scale = texture_size / 2.0
    xi = np.zeros(8)
    xi[0] = (center[0] - mid) / scale
    xi[1] = (center[1] - mid) / scale
    return xi


def norm_to_pixel(coords_norm, texture_size: int):
    """Normalized texture coords -> continuous pixel/grid coords."""
    mid = (texture_size - 1) / 2.0
    scale = texture_size / 2.0
    return coords_norm * scale + mid


def bilinear_image(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample (H, W, C) at continuous (x, y) pixel coords -> (C, P)."""
    h, w = img.shape[:2]
    xc = np.clip(x, 0.0, h - 1.0)
    yc = np.clip(y, 0.0, w - 1.0)
    x0 = np.minimum(np.floor(xc).astype(int), h - 2)
    y0 = np.minimum(np.floor(yc).astype(int), w - 2)
    fx = xc - x0
    fy = yc - y0
    v = (img[x0, y0] * ((1 - fx) * (1 - fy))[:, None]
         + img[x0, y0 + 1] * ((1 - fx) * fy)[:, None]
         + img[x0 + 1, y0] * (fx * (1 - fy))[:, None]
         + img[x0 + 1, y0 + 1] * (fx * fy)[:, None])
    return v.T


def make_patches(texture: np.ndarray, n_patches: int, patch_size: int,
                 perturb_scale: float, rng) -> PlanarProblem:
    """Crop n_patches overlapping patches under perturbed homographies.

    A perturbation whose warped patch would leave the texture is resampled
    (bounded retries).
    """
    size = texture.shape[0]
    coords = patch_grid(patch_size, size)
    centers = default_centers(size, patch_size, n_patches)
    margin = 1.0
    gt_tangents = []
    observations = []
    for center in centers:
        base = crop_tangent(center, size)
        for attempt in range(50):
            delta = rng.normal(0.0, perturb_scale, 8) * PERTURB_PROFILE
            xi = base + delta
            warped = warp2d(Tensor(xi), Tensor(coords)).value
            px = norm_to_pixel(warped, size)
            if (px.min() >= margin) and (px.max() <= size - 1 - margin):
                break
        else:
            raise RuntimeError("could not place patch inside the texture")
        gt_tangents.append(xi)
        observations.append(bilinear_image(texture, px[0], px[1]))
    return PlanarProblem(texture, patch_size, coords, centers, gt_tangents,
                         observations)


def init_state(problem: PlanarProblem, cfg: Align2DConfig, rng) -> PlanarState:
    dtype = np.dtype(cfg.dtype).type
    size = problem.texture.shape[0]
    # Near-flat start: the warp gradient follows the content's spatial
    # gradient, so a strongly textured random init pulls warps in fixed
    # arbitrary directions before any real structure exists.
    field = Tensor2DFactorized.random(size, size, cfg.rank, cfg.channels,
                                      scale=cfg.init_scale, rng=rng,
                                      dtype=dtype)
    warps = []
    for i, center in enumerate(problem.centers):
        if i == 0:
            warps.append(Tensor(problem.gt_tangents[0].copy()))  # gauge anchor
        else:
            warps.append(ad.leaf(crop_tangent(center, size)))
    return PlanarState(field, warps)


def loss_2d(state: PlanarState, problem: PlanarProblem, sigma_field: float,
            sigma_img: float = 0.0, max_kernel_length: int = 101) -> Tensor:
    """Mean squared error between filtered-field samples at the estimated
    warps and the (optionally smoothed) observed patches."""
    size = problem.texture.shape[0]
    kernel = make_kernel_1d(sigma_field,
                            default_length(sigma_field, max_kernel_length))
    view = filter_components_2d(state.field, kernel)
    total = None
    count = 0
    coords = Tensor(problem.coords)
    for xi, obs in zip(state.warps, problem.observations):
        warped = warp2d(xi, coords)
        px = norm_to_pixel(warped, size)
        pred = view.field.sample(px[0], px[1])
        target = _maybe_smooth_patch(obs, problem.patch_size, sigma_img,
                                     max_kernel_length)
        diff = pred - Tensor(target.astype(pred.dtype))
        sq = (diff * diff).sum()
        total = sq if total is None else total + sq
        count += obs.size
    return total / float(count)


def _maybe_smooth_patch(obs: np.ndarray, patch_size: int, sigma: float,
                        max_len: int) -> np.ndarray:
    """Normalized Gaussian blur of an observed patch.

    Dividing by the blurred window compensates the zero-padding mass loss
    near patch borders; without it a wide kernel vignettes the target, and
    the warps chase the vignette instead of the texture.
    """
    if sigma < 1e-4:
        return obs
    from .sepconv import convolve_same_2d
    k = make_kernel_1d(sigma, default_length(sigma, max_len))
    window = convolve_same_2d(np.ones((patch_size, patch_size)), k.weights)
    out = np.empty_like(obs)
    for c in range(obs.shape[0]):
        out[c] = (convolve_same_2d(obs[c].reshape(patch_size, patch_size),
                                   k.weights) / window).ravel()
    return out


def eval_planar(state: PlanarState, problem: PlanarProblem):
    """(warp_error, patch_psnr): tangent-coefficient error over free warps,
    PSNR of unfiltered content sampled at ground-truth warps."""
    size = problem.texture.shape[0]
    errs = []
    for i in range(1, len(state.warps)):
        est = state.warps[i].value
        errs.append(np.linalg.norm(est - problem.gt_tangents[i]))
    warp_error = float(np.mean(errs)) if errs else 0.0

    psnrs = []
    for xi, obs in zip(problem.gt_tangents, problem.observations):
        warped = warp2d(Tensor(xi), Tensor(problem.coords)).value
        px = norm_to_pixel(warped, size)
        pred = state.field.sample(px[0], px[1]).value
        psnrs.append(psnr(pred, obs))
    return warp_error, float(np.mean(psnrs))


def train_planar(cfg: Align2DConfig, seed: int, sigma0=None, texture=None):
    """Joint Adam on content and free warps under the kernel schedule.

    sigma0 overrides the schedule's initial width (0 = the naive ablation);
    texture overrides the bundled procedural image.  Returns
    (state, problem, rows) with rows (step, warp_error, psnr, sigma).
    """
    rng_noise = substream(seed, "noise")
    rng_init = substream(seed, "init")
    if texture is None:
        texture = make_texture(cfg.texture_size)
    elif texture.shape[0] != cfg.texture_size or texture.shape[0] != texture.shape[1]:
        raise ValueError("texture must be square with side texture_size")
    problem = make_patches(texture, cfg.n_patches, cfg.patch_size,
                           cfg.perturb_scale, rng_noise)
    state = init_state(problem, cfg, rng_init)

    schedule = KernelSchedule(
        sigma0=cfg.sigma0 if sigma0 is None else sigma0,
        cutoff_step=cfg.cutoff_step, half_life=cfg.half_life)
    # The warp group warms up so the content can form its blurred mosaic
    # before the warps start moving (early content is noise, and Adam turns
    # noise gradients into full-size steps).  coord_scale keeps the step
    # sizes proportionate to each tangent coordinate's natural range --
    # without it the projective coordinates random-walk across their whole
    # range while the translations are still converging.
    opt = Adam([
        {"name": "content", "params": state.field.params(), "lr": cfg.lr_tensor,
         "gamma": cfg.gamma, "decay_steps": cfg.iters},
        {"name": "warps", "params": state.warps[1:], "lr": cfg.lr_pose,
         "warmup": cfg.pose_warmup, "coord_scale": PERTURB_PROFILE,
         "gamma": cfg.pose_gamma, "decay_steps": cfg.iters},
    ])

    rows = []
    for step in range(cfg.iters + 1):
        sigma = schedule_sigma(schedule, step)
        sigma_img = sigma if cfg.smooth_supervision else 0.0
        loss = loss_2d(state, problem, sigma, sigma_img,
                       cfg.max_kernel_length)
        if not np.isfinite(loss.item()):
            raise RuntimeError(f"divergence at step {step}: loss={loss.item()}")
        if step % cfg.log_every == 0 or step == cfg.iters:
            warp_err, score = eval_planar(state, problem)
            rows.append((step, warp_err, score, sigma))
        if step == cfg.iters:
            break
        loss.backward()
        opt.step()
        opt.zero_grad()
        state.step = step + 1
    return state, problem, rows
