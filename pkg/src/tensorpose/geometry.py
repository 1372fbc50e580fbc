"""Lie-algebra warp parameterizations, camera rays, Procrustes alignment,
and pose-error metrics.

Exponential maps are built from differentiable tape operations, so pose
gradients flow through them; numpy-only callers read `.value` off the
result.  Tangent conventions: se(3) = (translation xyz, rotation xyz);
sl(3) = 8 coefficients over the traceless generator basis in `SL3_GENERATORS`
(2 translations, 1 rotation, 2 scale-like, 1 shear, 2 perspective).
"""

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor

SMALL_ANGLE = 1e-6

# The 8 standard traceless generators of sl(3).
SL3_GENERATORS = np.array([
    [[0, 0, 1], [0, 0, 0], [0, 0, 0]],    # translation x
    [[0, 0, 0], [0, 0, 1], [0, 0, 0]],    # translation y
    [[0, 1, 0], [-1, 0, 0], [0, 0, 0]],   # rotation
    [[1, 0, 0], [0, -1, 0], [0, 0, 0]],   # anisotropic scale
    [[1, 0, 0], [0, 1, 0], [0, 0, -2]],   # isotropic scale vs perspective row
    [[0, 1, 0], [1, 0, 0], [0, 0, 0]],    # shear
    [[0, 0, 0], [0, 0, 0], [1, 0, 0]],    # perspective x
    [[0, 0, 0], [0, 0, 0], [0, 1, 0]],    # perspective y
], dtype=float)


def _skew(w: Tensor) -> Tensor:
    """3x3 cross-product matrix from a length-3 tangent piece."""
    zero = w[0] * 0.0
    rows = [ad.stack([zero, -w[2], w[1]]),
            ad.stack([w[2], zero, -w[0]]),
            ad.stack([-w[1], w[0], zero])]
    return ad.stack(rows, axis=0)


def exp_so3(omega) -> Tensor:
    """Rodrigues with a Taylor fallback below the small-angle threshold."""
    omega = as_tensor(omega)
    theta_sq = (omega * omega).sum()
    t2 = theta_sq.item()
    wx = _skew(omega)
    wx2 = wx @ wx
    if math.sqrt(t2) < SMALL_ANGLE:
        # sin(t)/t and (1-cos t)/t^2 as series in t^2 (keeps gradients exact
        # through theta -> 0 where the closed forms are 0/0).
        a = 1.0 - theta_sq * (1.0 / 6.0)
        b = 0.5 - theta_sq * (1.0 / 24.0)
    else:
        theta = ad.sqrt(theta_sq)
        a = ad.sin(theta) / theta
        b = (1.0 - ad.cos(theta)) / theta_sq
    eye = Tensor(np.eye(3))
    return eye + a * wx + b * wx2


def exp_se3(xi) -> Tensor:
    """4x4 rigid transform from a 6-tangent (translation first)."""
    xi = as_tensor(xi)
    v = xi[0:3]
    omega = xi[3:6]
    theta_sq = (omega * omega).sum()
    t2 = theta_sq.item()
    wx = _skew(omega)
    wx2 = wx @ wx
    if math.sqrt(t2) < SMALL_ANGLE:
        a = 1.0 - theta_sq * (1.0 / 6.0)
        b = 0.5 - theta_sq * (1.0 / 24.0)
        c = 1.0 / 6.0 - theta_sq * (1.0 / 120.0)
    else:
        theta = ad.sqrt(theta_sq)
        a = ad.sin(theta) / theta
        b = (1.0 - ad.cos(theta)) / theta_sq
        c = (1.0 - a) / theta_sq
    eye = Tensor(np.eye(3))
    rot = eye + a * wx + b * wx2
    vmat = eye + b * wx + c * wx2
    trans = vmat @ v
    top = ad.concatenate([rot, ad.reshape(trans, (3, 1))], axis=1)
    bottom = Tensor(np.array([[0.0, 0.0, 0.0, 1.0]]))
    return ad.concatenate([top, bottom], axis=0)


def exp_sl3(xi) -> Tensor:
    """3x3 homography (unit determinant) from an 8-tangent.

    Scaling-and-squaring Taylor matrix exponential; converges to 1e-12 on
    the halved argument, then squares back.
    """
    xi = as_tensor(xi)
    gen = SL3_GENERATORS.reshape(8, 9)
    a = ad.reshape(xi @ gen, (3, 3))
    norm = float(np.abs(a.value).sum(axis=1).max())  # induced-infinity bound
    squarings = max(0, math.ceil(math.log2(max(norm, 1e-30) / 0.5)))
    scaled = a * (0.5 ** squarings)
    out = Tensor(np.eye(3))
    term = Tensor(np.eye(3))
    for n in range(1, 25):
        term = (term @ scaled) * (1.0 / n)
        out = out + term
        if float(np.abs(term.value).max()) < 1e-12:
            break
    for _ in range(squarings):
        out = out @ out
    return out


def log_so3(rot: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix (numpy only; used for setup)."""
    cos_theta = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = math.acos(cos_theta)
    vee = 0.5 * np.array([rot[2, 1] - rot[1, 2],
                          rot[0, 2] - rot[2, 0],
                          rot[1, 0] - rot[0, 1]])
    if theta < SMALL_ANGLE:
        return vee * (1.0 + theta ** 2 / 6.0)
    return vee * (theta / math.sin(theta))


def log_se3(mat: np.ndarray) -> np.ndarray:
    """6-tangent (translation first) of a rigid transform (numpy only)."""
    omega = log_so3(mat[:3, :3])
    theta = np.linalg.norm(omega)
    wx = np.array([[0.0, -omega[2], omega[1]],
                   [omega[2], 0.0, -omega[0]],
                   [-omega[1], omega[0], 0.0]])
    if theta < SMALL_ANGLE:
        vinv = np.eye(3) - 0.5 * wx + (1.0 / 12.0) * (wx @ wx)
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta ** 2
        vinv = (np.eye(3) - 0.5 * wx
                + (1.0 / theta ** 2) * (1.0 - a / (2.0 * b)) * (wx @ wx))
    v = vinv @ mat[:3, 3]
    return np.concatenate([v, omega])


def compose_se3(xi_left: np.ndarray, xi_right: np.ndarray) -> np.ndarray:
    """Tangent of exp(xi_left) @ exp(xi_right)."""
    left = exp_se3(xi_left).value
    right = exp_se3(xi_right).value
    return log_se3(left @ right)


def warp2d(xi_sl3, pts) -> Tensor:
    """Apply the homography exp(xi) projectively to 2D points (2, P)."""
    pts = as_tensor(pts)
    h = exp_sl3(xi_sl3)
    p = pts.shape[1]
    ones = Tensor(np.ones((1, p)))
    homo = h @ ad.concatenate([pts, ones], axis=0)
    denom = homo[2:3, :]
    if np.any(np.abs(denom.value) < 1e-12):
        raise ValueError("warped point at infinity")
    return homo[0:2, :] / denom


# -- cameras and rays ---------------------------------------------------


def make_intrinsics(width: int, height: int, fov_x_deg: float) -> np.ndarray:
    if width < 1 or height < 1 or not 0 < fov_x_deg < 180:
        raise ValueError("degenerate intrinsics")
    focal = 0.5 * width / math.tan(math.radians(fov_x_deg) / 2.0)
    return np.array([[focal, 0.0, 0.5 * (width - 1)],
                     [0.0, focal, 0.5 * (height - 1)],
                     [0.0, 0.0, 1.0]])


def pixel_directions(intrinsics: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Canonical (camera-frame) ray directions K^{-1} u-bar, unit depth."""
    if abs(np.linalg.det(intrinsics)) < 1e-12:
        raise ValueError("singular intrinsics")
    px = np.asarray(pixels, dtype=float)
    bar = np.concatenate([px, np.ones((1, px.shape[1]))], axis=0)
    return np.linalg.solve(intrinsics, bar)


def camera_rays(pose_xi, intrinsics, pixels):
    """World-space rays for a camera-to-world pose tangent.

    Returns (origins (3,), dirs (3, P) Tensor).  Depth-t points are
    origin + t * dir with unit-depth dirs, so equidistant t means
    equidistant depth along the optical axis.
    """
    d_cam = pixel_directions(intrinsics, pixels)
    mat = exp_se3(pose_xi)
    rot = mat[0:3, 0:3]
    center = mat[0:3, 3]
    return center, rot @ Tensor(d_cam)


def sample_depths(near: float, far: float, count: int) -> np.ndarray:
    """Equidistant depths including both endpoints."""
    if count < 2 or not far > near > 0:
        raise ValueError("need count >= 2 and far > near > 0")
    return np.linspace(near, far, count)


def ray_deltas(dirs_value: np.ndarray, near: float, far: float,
               count: int) -> np.ndarray:
    """Per-sample segment lengths delta_j = ||s_j - s_{j-1}||, all equal.

    Rotation preserves direction norms, so deltas are pose-independent and
    carry no gradient.
    """
    h = (far - near) / (count - 1)
    return h * np.linalg.norm(dirs_value, axis=0)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world matrix with +z looking from eye toward target."""
    eye = np.asarray(eye, dtype=float)
    forward = np.asarray(target, dtype=float) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    norm = np.linalg.norm(right)
    if norm < 1e-9:  # looking along up; pick any perpendicular
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
        norm = np.linalg.norm(right)
    right /= norm
    down = np.cross(forward, right)
    mat = np.eye(4)
    mat[:3, 0] = right
    mat[:3, 1] = down
    mat[:3, 2] = forward
    mat[:3, 3] = eye
    return mat


# -- alignment and errors -----------------------------------------------


def procrustes_similarity(src: np.ndarray, dst: np.ndarray):
    """Best-fit similarity (scale, rotation, translation) mapping src -> dst.

    Umeyama via SVD on (N, 3) point sets.  Returns (s, rot, t, degenerate)
    where degenerate flags a rank-deficient covariance (collinear centers);
    the alignment is still returned in that case.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.shape[0] < 3:
        raise ValueError("need matching point sets with >= 3 points")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / src.shape[0]
    u, d, vt = np.linalg.svd(cov)
    degenerate = np.linalg.matrix_rank(cov) < 2
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rot = u @ s @ vt
    var_s = (xs ** 2).sum() / src.shape[0]
    scale = float(np.trace(np.diag(d) @ s) / var_s) if var_s > 0 else 1.0
    t = mu_d - scale * rot @ mu_s
    return scale, rot, t, degenerate


def procrustes_align(poses_est, poses_gt):
    """Align estimated camera poses to ground truth on their centers.

    Both inputs are lists of se(3) tangents (camera-to-world).  Returns
    (similarity dict, aligned 4x4 matrices).
    """
    est = [exp_se3(np.asarray(p)).value for p in poses_est]
    gt = [exp_se3(np.asarray(p)).value for p in poses_gt]
    centers_est = np.stack([m[:3, 3] for m in est])
    centers_gt = np.stack([m[:3, 3] for m in gt])
    scale, rot, t, degenerate = procrustes_similarity(centers_est, centers_gt)
    aligned = []
    for m in est:
        out = np.eye(4)
        out[:3, :3] = rot @ m[:3, :3]
        out[:3, 3] = scale * rot @ m[:3, 3] + t
        aligned.append(out)
    sim = {"scale": scale, "rotation": rot, "translation": t,
           "degenerate": bool(degenerate)}
    return sim, aligned


def pose_errors(aligned_est, poses_gt):
    """Mean (rotation error deg, center distance) after alignment."""
    rot_errs = []
    trans_errs = []
    for m_est, xi_gt in zip(aligned_est, poses_gt):
        m_gt = exp_se3(np.asarray(xi_gt)).value
        rel = m_est[:3, :3] @ m_gt[:3, :3].T
        angle = np.linalg.norm(log_so3(rel))
        rot_errs.append(math.degrees(angle))
        trans_errs.append(float(np.linalg.norm(m_est[:3, 3] - m_gt[:3, 3])))
    return float(np.mean(rot_errs)), float(np.mean(trans_errs))


def pose_errors_aligned(poses_est, poses_gt):
    """Procrustes-align then score; the standard evaluation path."""
    _, aligned = procrustes_align(poses_est, poses_gt)
    return pose_errors(aligned, poses_gt)


# -- pose text I/O ------------------------------------------------------


def save_tangents(path, tangents) -> None:
    """One pose per line, floats at 17 significant digits (round-trip exact)."""
    with open(path, "w") as fh:
        for t in tangents:
            fh.write(" ".join(f"{x:.17g}" for x in np.asarray(t).ravel()) + "\n")


def load_tangents(path):
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(np.array([float(tok) for tok in line.split()]))
    return out
