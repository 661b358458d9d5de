from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.geometry import DepthRaster, ImageRaster, Intrinsics, RigidPose, pixel_grid, project_points
from src.utils.errors import InvalidInputError

__all__ = [
    'VolumeConfig',
    'VoxelBlock',
    'TsdfVolume',
    'integrate_frame',
    'fill_from_sdf',
    ]


@dataclass(frozen=True)
class VolumeConfig:
    voxel_size: float = 0.2
    truncation_voxels: float = 3.0
    weight_cap: int = 128
    block_size: int = 8

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise InvalidInputError(f'fusion.{name} must be positive, got {value}')

    @classmethod
    def from_cfg(cls, cfg):
        return cls(**{name: getattr(cfg.fusion, name) for name in cls.__dataclass_fields__})


@dataclass(eq=False)
class VoxelBlock:
    size: int
    tsdf: np.ndarray = None
    weight: np.ndarray = None
    rgb: np.ndarray = None

    def __post_init__(self):
        shape = (self.size,) * 3
        if self.tsdf is None:
            self.tsdf = np.ones(shape)
        if self.weight is None:
            self.weight = np.zeros(shape)
        if self.rgb is None:
            self.rgb = np.zeros(shape + (3,))


class TsdfVolume:
    """
    Sparse TSDF: blocks of block_size^3 voxels keyed by integer block coordinates.
    Voxel with integer index g sits at world position g * voxel_size; the block of g is
    floor(g / block_size). tsdf is normalized by the truncation distance.
    """
    def __init__(self, voxel_size=0.2, truncation=None, weight_cap=128, block_size=8):
        if truncation is None:
            truncation = 3.0 * voxel_size
        if not (voxel_size > 0 and truncation > 0 and weight_cap > 0 and block_size > 0):
            raise InvalidInputError('voxel size, truncation, weight cap and block size must be positive')
        self.voxel_size = float(voxel_size)
        self.truncation = float(truncation)
        self.weight_cap = weight_cap
        self.block_size = int(block_size)
        self.blocks: Dict[Tuple[int, int, int], VoxelBlock] = {}

    @classmethod
    def from_config(cls, cfg: VolumeConfig):
        return cls(cfg.voxel_size, cfg.truncation_voxels * cfg.voxel_size, cfg.weight_cap, cfg.block_size)

    def __len__(self):
        return len(self.blocks)

    @property
    def is_empty(self):
        return not self.blocks

    def observed_voxels(self):
        return int(sum((b.weight > 0).sum() for b in self.blocks.values()))

    def block_keys_of(self, points):
        """Keys of the blocks holding the voxels nearest to world points [N, 3]."""
        voxels = np.rint(np.asarray(points, dtype=np.float64) / self.voxel_size).astype(np.int64)
        keys = np.floor_divide(voxels, self.block_size)
        return np.unique(keys, axis=0) if len(keys) else keys.reshape(0, 3)

    def allocate(self, keys):
        for key in map(tuple, np.asarray(keys, dtype=np.int64).reshape(-1, 3).tolist()):
            if key not in self.blocks:
                self.blocks[key] = VoxelBlock(self.block_size)

    def voxel_indices(self, keys):
        """[K, b, b, b, 3] integer voxel indices of the given blocks."""
        b = self.block_size
        local = np.stack(np.meshgrid(np.arange(b), np.arange(b), np.arange(b), indexing='ij'), axis=-1)
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 1, 1, 1, 3)
        return keys * b + local[None]

    def voxel_centers(self, keys):
        return self.voxel_indices(keys) * self.voxel_size

    def gather(self, keys):
        keys = [tuple(k) for k in np.asarray(keys, dtype=np.int64).reshape(-1, 3).tolist()]
        blocks = [self.blocks[k] for k in keys]
        return (np.stack([b.tsdf for b in blocks]), np.stack([b.weight for b in blocks]), np.stack([b.rgb for b in blocks]))

    def scatter(self, keys, tsdf, weight, rgb):
        keys = [tuple(k) for k in np.asarray(keys, dtype=np.int64).reshape(-1, 3).tolist()]
        for n, key in enumerate(keys):
            block = self.blocks[key]
            block.tsdf[...] = tsdf[n]
            block.weight[...] = weight[n]
            block.rgb[...] = rgb[n]

    def bounds(self):
        """(min, max) voxel index over allocated blocks, inclusive."""
        keys = np.array(sorted(self.blocks), dtype=np.int64).reshape(-1, 3)
        return keys.min(axis=0) * self.block_size, (keys.max(axis=0) + 1) * self.block_size - 1

    def dense(self):
        """
        Dense copy over the allocated bounding box: (tsdf, weight, rgb, origin voxel index).
        Cells of unallocated blocks read tsdf 1 and weight 0.
        """
        lo, hi = self.bounds()
        shape = tuple(hi - lo + 1)
        tsdf = np.ones(shape)
        weight = np.zeros(shape)
        rgb = np.zeros(shape + (3,))
        b = self.block_size
        for key, block in self.blocks.items():
            start = np.array(key) * b - lo
            sl = tuple(slice(s, s + b) for s in start)
            tsdf[sl], weight[sl], rgb[sl] = block.tsdf, block.weight, block.rgb
        return tsdf, weight, rgb, lo

    def integrate(self, depth: DepthRaster, image: Optional[ImageRaster], pose: RigidPose, k: Intrinsics):
        return integrate_frame(self, depth, image, pose, k)


def _band_samples(depth: DepthRaster, k: Intrinsics, truncation, step):
    """Camera-space points along every valid pixel ray within +-truncation of the observed depth."""
    u, v = pixel_grid(k)
    valid = depth.valid
    d = depth.values[valid]
    offsets = np.arange(-truncation, truncation + 0.5 * step, step)
    z = d[:, None] + offsets[None, :]
    rays = np.stack([(u[valid] - k.cx) / k.fx, (v[valid] - k.cy) / k.fy, np.ones(len(d))], axis=-1)
    points = rays[:, None, :] * z[..., None]
    return points[z > 0]


def integrate_frame(vol: TsdfVolume, depth: DepthRaster, image: Optional[ImageRaster], pose: RigidPose, k: Intrinsics):
    """
    Projective TSDF update of the blocks crossed by the truncation band of this frame.
    pose maps camera to world. Voxels closer than -truncation behind the surface are left
    alone; the rest get obs = clip(sdf / truncation, -1, 1) folded into a running average,
    and weight = min(weight + 1, cap).
    """
    depth.check(k)
    if image is not None:
        image.check(k)
    if not depth.valid.any():
        return vol

    samples = _band_samples(depth, k, vol.truncation, 0.5 * vol.voxel_size)
    keys = vol.block_keys_of(pose.apply(samples))
    vol.allocate(keys)

    tsdf, weight, rgb = vol.gather(keys)
    centers = vol.voxel_centers(keys).reshape(-1, 3)
    cam = pose.inverse().apply(centers)
    uv, in_view = project_points(cam, k)
    col = np.rint(np.where(in_view, uv[:, 0], 0)).astype(np.int64)
    row = np.rint(np.where(in_view, uv[:, 1], 0)).astype(np.int64)
    d = np.where(in_view, depth.values[row, col], 0.0)
    sdf = d - cam[:, 2]
    update = in_view & (d > 0) & (sdf >= -vol.truncation)

    flat_tsdf, flat_weight = tsdf.reshape(-1), weight.reshape(-1)
    flat_rgb = rgb.reshape(-1, 3)
    obs = np.clip(sdf[update] / vol.truncation, -1.0, 1.0)
    w = flat_weight[update]
    flat_tsdf[update] = (flat_tsdf[update] * w + obs) / (w + 1.0)
    if image is not None:
        color = image.values[row[update], col[update]]
        flat_rgb[update] = (flat_rgb[update] * w[:, None] + color) / (w[:, None] + 1.0)
    flat_weight[update] = np.minimum(w + 1.0, vol.weight_cap)

    vol.scatter(keys, flat_tsdf.reshape(tsdf.shape), flat_weight.reshape(weight.shape), flat_rgb.reshape(rgb.shape))
    return vol


def fill_from_sdf(vol: TsdfVolume, sdf_fn, lower, upper, color_fn=None):
    """
    Write an analytic signed distance (cm) into every voxel of the blocks covering the
    world box [lower, upper], with weight 1. sdf_fn and color_fn take [N, 3] points.
    """
    lower = np.floor_divide(np.floor(np.asarray(lower) / vol.voxel_size).astype(np.int64), vol.block_size)
    upper = np.floor_divide(np.ceil(np.asarray(upper) / vol.voxel_size).astype(np.int64), vol.block_size)
    grid = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lower, upper)], indexing='ij'), axis=-1)
    keys = grid.reshape(-1, 3)
    vol.allocate(keys)
    centers = vol.voxel_centers(keys)
    shape = centers.shape[:-1]
    tsdf = np.clip(np.asarray(sdf_fn(centers.reshape(-1, 3)), dtype=np.float64) / vol.truncation, -1.0, 1.0).reshape(shape)
    weight = np.ones(shape)
    rgb = np.zeros(shape + (3,))
    if color_fn is not None:
        rgb = np.asarray(color_fn(centers.reshape(-1, 3)), dtype=np.float64).reshape(shape + (3,))
    vol.scatter(keys, tsdf, weight, rgb)
    return vol
