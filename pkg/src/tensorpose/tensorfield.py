"""Decomposed low-rank tensor containers.

Three containers: a per-channel rank-R factorization of a 2D image, a
vector-matrix (VM) factorization of a 3D scalar volume, and its feature
variant that composes per-component feature vectors into a G-vector per
query.  Sampling interpolates the 1D/2D factors component-wise, which equals
interpolating the dense reconstruction but touches only O(R) entries per
query; `reconstruct_dense` exists as the oracle for that equivalence and is
never used on the training path.

Factor arrays are autodiff leaves so gradients flow to them and, through the
interpolation weights, to continuous query coordinates (needed for pose
gradients).
"""

from dataclasses import dataclass, field
import struct

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor

# Refuse dense reconstructions above this many scalars (oracles only need
# desk sizes; a typo'd dim should not OOM the box).
DENSE_CAP = 1 << 26

_MAGIC = b"TPTF"
_VERSION = 1
_KIND_2D, _KIND_VM3D, _KIND_FEAT3D = 1, 2, 3


def _check_cap(n_elements: int) -> None:
    if n_elements > DENSE_CAP:
        raise ValueError(
            f"dense reconstruction of {n_elements} elements exceeds cap {DENSE_CAP}")


def _floor_index(x_clamped: np.ndarray, dim: int) -> np.ndarray:
    # Lower cell index such that idx+1 is always valid.
    return np.minimum(np.floor(x_clamped).astype(np.int64), dim - 2)


def lerp_last(t, x) -> Tensor:
    """Linearly interpolate t (..., W) along its last axis at x (P,).

    Coordinates are clamped to [0, W-1] (border policy); gradients flow both
    into t and into x through the fractional weights.
    """
    t = as_tensor(t)
    x = as_tensor(x)
    w = t.shape[-1]
    xc = ad.clip(x, 0.0, w - 1.0)
    i0 = _floor_index(xc.value, w)
    f = xc - i0
    if f.dtype != t.dtype:  # keep heavy arrays in the field's dtype
        f = ad.astype(f, t.dtype)
    v0 = ad.take_last(t, i0)
    v1 = ad.take_last(t, i0 + 1)
    return v0 + f * (v1 - v0)


def bilerp_matrix(m, j_dim: int, k_dim: int, y, z) -> Tensor:
    """Bilinearly interpolate m (R, J, K) at (y, z) each (P,) -> (R, P)."""
    m = as_tensor(m)
    y, z = as_tensor(y), as_tensor(z)
    yc = ad.clip(y, 0.0, j_dim - 1.0)
    zc = ad.clip(z, 0.0, k_dim - 1.0)
    j0 = _floor_index(yc.value, j_dim)
    k0 = _floor_index(zc.value, k_dim)
    fy = yc - j0
    fz = zc - k0
    if fy.dtype != m.dtype:
        fy = ad.astype(fy, m.dtype)
        fz = ad.astype(fz, m.dtype)
    flat = ad.reshape(m, (m.shape[0], j_dim * k_dim))
    v00 = ad.take_last(flat, j0 * k_dim + k0)
    v01 = ad.take_last(flat, j0 * k_dim + k0 + 1)
    v10 = ad.take_last(flat, (j0 + 1) * k_dim + k0)
    v11 = ad.take_last(flat, (j0 + 1) * k_dim + k0 + 1)
    top = v00 + fz * (v01 - v00)
    bot = v10 + fz * (v11 - v10)
    return top + fy * (bot - top)


def _resize_last(arr: np.ndarray, new_n: int) -> np.ndarray:
    """Linear resample of the last axis onto new_n aligned grid points."""
    n = arr.shape[-1]
    if new_n == n:
        return arr.copy()
    pos = np.arange(new_n) * ((n - 1) / (new_n - 1))
    i0 = np.minimum(pos.astype(np.int64), n - 2)
    f = (pos - i0).astype(arr.dtype)
    v0 = arr[..., i0]
    v1 = arr[..., i0 + 1]
    return v0 + f * (v1 - v0)


def _resize_matrix(arr: np.ndarray, new_j: int, new_k: int) -> np.ndarray:
    out = _resize_last(arr, new_k)
    out = np.swapaxes(_resize_last(np.swapaxes(out, -1, -2), new_j), -1, -2)
    return np.ascontiguousarray(out)


@dataclass
class Tensor2DFactorized:
    """Per-channel rank-R factorization of a (w, h, C) image.

    Dense value at (x, y, c) = sum_r vx[c,r,x] * vy[c,r,y].
    """

    width: int
    height: int
    rank: int
    channels: int
    vx: Tensor  # (C, R, width)
    vy: Tensor  # (C, R, height)
    access_count: int = field(default=0, compare=False)

    @classmethod
    def random(cls, width, height, rank, channels=3, scale=0.1, rng=None,
               dtype=np.float64):
        if width < 2 or height < 2 or rank < 1 or channels < 1:
            raise ValueError("dims must be >= 2 and rank/channels >= 1")
        rng = rng or np.random.default_rng(0)
        vx = rng.normal(0.0, scale, (channels, rank, width)).astype(dtype)
        vy = rng.normal(0.0, scale, (channels, rank, height)).astype(dtype)
        return cls(width, height, rank, channels, ad.leaf(vx), ad.leaf(vy))

    def params(self):
        return [self.vx, self.vy]

    def sample(self, x, y) -> Tensor:
        """Sample at continuous coords x, y (each (P,)) -> (C, P)."""
        p = np.size(x.value if isinstance(x, Tensor) else x)
        self.access_count += 4 * self.channels * self.rank * p
        vx = lerp_last(self.vx, x)  # (C, R, P)
        vy = lerp_last(self.vy, y)
        return (vx * vy).sum(axis=1)

    def reconstruct_dense(self) -> np.ndarray:
        """(width, height, C) dense image; test/oracle use only."""
        _check_cap(self.width * self.height * self.channels)
        dense = np.einsum("cri,crj->ijc", self.vx.value, self.vy.value)
        return dense

    def replace_components(self, vx, vy) -> "Tensor2DFactorized":
        return Tensor2DFactorized(self.width, self.height, self.rank,
                                  self.channels, as_tensor(vx), as_tensor(vy))


@dataclass
class VMTensor3D:
    """VM factorization of an (I, J, K) volume.

    Dense value at (i,j,k) =
      sum_r vx[r,i]*m_yz[r,j,k] + vy[r,j]*m_xz[r,i,k] + vz[r,k]*m_xy[r,i,j].
    """

    dims: tuple
    rank: int
    vx: Tensor  # (R, I)
    vy: Tensor  # (R, J)
    vz: Tensor  # (R, K)
    m_yz: Tensor  # (R, J, K)
    m_xz: Tensor  # (R, I, K)
    m_xy: Tensor  # (R, I, J)
    access_count: int = field(default=0, compare=False)

    @classmethod
    def random(cls, dims, rank, scale=0.1, rng=None, dtype=np.float64):
        i, j, k = dims
        if min(i, j, k) < 2 or rank < 1:
            raise ValueError("dims must be >= 2 and rank >= 1")
        rng = rng or np.random.default_rng(0)

        def draw(*shape):
            return ad.leaf(rng.normal(0.0, scale, shape).astype(dtype))

        return cls((i, j, k), rank,
                   draw(rank, i), draw(rank, j), draw(rank, k),
                   draw(rank, j, k), draw(rank, i, k), draw(rank, i, j))

    def params(self):
        return [self.vx, self.vy, self.vz, self.m_yz, self.m_xz, self.m_xy]

    def line_mat_products(self, x, y, z):
        """The three per-axis-group (R, P) products; shared with the feature field."""
        i, j, k = self.dims
        gx = lerp_last(self.vx, x) * bilerp_matrix(self.m_yz, j, k, y, z)
        gy = lerp_last(self.vy, y) * bilerp_matrix(self.m_xz, i, k, x, z)
        gz = lerp_last(self.vz, z) * bilerp_matrix(self.m_xy, i, j, x, y)
        return gx, gy, gz

    def sample(self, x, y, z) -> Tensor:
        """Scalar field at continuous grid coords, each (P,) -> (P,)."""
        p = np.size(x.value if isinstance(x, Tensor) else x)
        self.access_count += 18 * self.rank * p
        gx, gy, gz = self.line_mat_products(x, y, z)
        return (gx + gy + gz).sum(axis=0)

    def reconstruct_dense(self) -> np.ndarray:
        i, j, k = self.dims
        _check_cap(i * j * k)
        out = np.einsum("ri,rjk->ijk", self.vx.value, self.m_yz.value)
        out += np.einsum("rj,rik->ijk", self.vy.value, self.m_xz.value)
        out += np.einsum("rk,rij->ijk", self.vz.value, self.m_xy.value)
        return out

    def replace_components(self, vx, vy, vz, m_yz, m_xz, m_xy) -> "VMTensor3D":
        return VMTensor3D(self.dims, self.rank, as_tensor(vx), as_tensor(vy),
                          as_tensor(vz), as_tensor(m_yz), as_tensor(m_xz),
                          as_tensor(m_xy))

    def upsample(self, new_dims) -> "VMTensor3D":
        _check_upsample(self.dims, new_dims)
        i, j, k = new_dims
        return VMTensor3D(
            (i, j, k), self.rank,
            ad.leaf(_resize_last(self.vx.value, i)),
            ad.leaf(_resize_last(self.vy.value, j)),
            ad.leaf(_resize_last(self.vz.value, k)),
            ad.leaf(_resize_matrix(self.m_yz.value, j, k)),
            ad.leaf(_resize_matrix(self.m_xz.value, i, k)),
            ad.leaf(_resize_matrix(self.m_xy.value, i, j)))


@dataclass
class FeatureTensor3D(VMTensor3D):
    """VM component set plus per-component feature vectors b (R, G).

    Queried feature at a point is the G-vector
      sum_r [vx*m_yz](p) b_x[r] + [vy*m_xz](p) b_y[r] + [vz*m_xy](p) b_z[r].
    """

    gdim: int = 0
    bx: Tensor = None  # (R, G)
    by: Tensor = None
    bz: Tensor = None

    @classmethod
    def random(cls, dims, rank, gdim, scale=0.1, rng=None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        base = VMTensor3D.random(dims, rank, scale, rng, dtype)

        def draw():
            return ad.leaf(rng.normal(0.0, scale, (rank, gdim)).astype(dtype))

        return cls(base.dims, base.rank, base.vx, base.vy, base.vz,
                   base.m_yz, base.m_xz, base.m_xy,
                   gdim=gdim, bx=draw(), by=draw(), bz=draw())

    def params(self):
        return super().params() + [self.bx, self.by, self.bz]

    def sample_feature(self, x, y, z) -> Tensor:
        """(G, P) feature vectors at continuous grid coords."""
        p = np.size(x.value if isinstance(x, Tensor) else x)
        self.access_count += (18 + 3 * self.gdim) * self.rank * p
        gx, gy, gz = self.line_mat_products(x, y, z)
        out = ad.transpose(self.bx, (1, 0)) @ gx
        out = out + ad.transpose(self.by, (1, 0)) @ gy
        out = out + ad.transpose(self.bz, (1, 0)) @ gz
        return out

    def reconstruct_dense_features(self) -> np.ndarray:
        i, j, k = self.dims
        _check_cap(i * j * k * self.gdim)
        out = np.einsum("ri,rjk,rg->ijkg", self.vx.value, self.m_yz.value,
                        self.bx.value)
        out += np.einsum("rj,rik,rg->ijkg", self.vy.value, self.m_xz.value,
                         self.by.value)
        out += np.einsum("rk,rij,rg->ijkg", self.vz.value, self.m_xy.value,
                         self.bz.value)
        return out

    def upsample(self, new_dims) -> "FeatureTensor3D":
        base = VMTensor3D.upsample(self, new_dims)
        return FeatureTensor3D(base.dims, base.rank, base.vx, base.vy, base.vz,
                               base.m_yz, base.m_xz, base.m_xy,
                               gdim=self.gdim,
                               bx=ad.leaf(self.bx.value.copy()),
                               by=ad.leaf(self.by.value.copy()),
                               bz=ad.leaf(self.bz.value.copy()))


def _check_upsample(old_dims, new_dims) -> None:
    if len(new_dims) != len(old_dims):
        raise ValueError("dimension count mismatch")
    if any(n < o for n, o in zip(new_dims, old_dims)):
        raise ValueError(f"upsample cannot shrink: {old_dims} -> {new_dims}")


# -- binary checkpoints -------------------------------------------------
#
# Byte layout (all little-endian):
#   magic   4 bytes  b"TPTF"
#   version u32      1
#   kind    u32      1 = 2D factorized, 2 = VM 3D, 3 = feature 3D
#   header  u32 x 6  kind 1: (w, h, R, C, 0, 0)
#                    kind 2: (I, J, K, R, 0, 0)
#                    kind 3: (I, J, K, R, G, 0)
#   arrays  float64  components in declared field order, C order:
#                    kind 1: vx, vy
#                    kind 2: vx, vy, vz, m_yz, m_xz, m_xy
#                    kind 3: as kind 2 then bx, by, bz
# Round-trips are bit-exact for float64 fields.


def _field_kind_and_header(t):
    if isinstance(t, FeatureTensor3D):
        i, j, k = t.dims
        return _KIND_FEAT3D, (i, j, k, t.rank, t.gdim, 0)
    if isinstance(t, VMTensor3D):
        i, j, k = t.dims
        return _KIND_VM3D, (i, j, k, t.rank, 0, 0)
    if isinstance(t, Tensor2DFactorized):
        return _KIND_2D, (t.width, t.height, t.rank, t.channels, 0, 0)
    raise TypeError(f"not a tensor field: {type(t)}")


def save_field(path, t) -> None:
    kind, header = _field_kind_and_header(t)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, kind))
        fh.write(struct.pack("<6I", *header))
        for p in t.params():
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_field(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a tensorpose checkpoint")
        version, kind = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        header = struct.unpack("<6I", fh.read(24))
        raw = fh.read()

    def pull(offset, shape):
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=n,
                            offset=offset * 8).reshape(shape).copy()
        return offset + n, ad.leaf(arr)

    off = 0
    if kind == _KIND_2D:
        w, h, r, c = header[:4]
        off, vx = pull(off, (c, r, w))
        off, vy = pull(off, (c, r, h))
        return Tensor2DFactorized(w, h, r, c, vx, vy)
    if kind in (_KIND_VM3D, _KIND_FEAT3D):
        i, j, k, r = header[:4]
        off, vx = pull(off, (r, i))
        off, vy = pull(off, (r, j))
        off, vz = pull(off, (r, k))
        off, m_yz = pull(off, (r, j, k))
        off, m_xz = pull(off, (r, i, k))
        off, m_xy = pull(off, (r, i, j))
        if kind == _KIND_VM3D:
            return VMTensor3D((i, j, k), r, vx, vy, vz, m_yz, m_xz, m_xy)
        g = header[4]
        off, bx = pull(off, (r, g))
        off, by = pull(off, (r, g))
        off, bz = pull(off, (r, g))
        return FeatureTensor3D((i, j, k), r, vx, vy, vz, m_yz, m_xz, m_xy,
                               gdim=g, bx=bx, by=by, bz=bz)
    raise ValueError(f"{path}: unknown field kind {kind}")
