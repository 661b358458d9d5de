import numpy as np
import torch
import torch.nn.functional as F

from src.utils.errors import DimensionMismatchError

from .camera import Intrinsics, backproject_points, depth_to_points, pixel_grid, project_points
from .pose import RigidPose
from .raster import DepthRaster, ImageRaster, sample_depth

__all__ = [
    'reproject_depth',
    'reproject_depth_pair',
    'warp_view',
    ]


def _splat(src_depth: DepthRaster, t_rel: RigidPose, k: Intrinsics):
    """
    Forward-project the valid source pixels into the target camera with a
    nearest-pixel z-buffer.
    return: target depth [H, W], subpixel uv of the winning point per target pixel [H, W, 2] (NaN if empty)
    """
    src_depth.check(k)
    depth_out = np.zeros(k.shape)
    uv_out = np.full(k.shape + (2,), np.nan)
    points, _ = depth_to_points(src_depth.values, k)
    if len(points) == 0:
        return depth_out, uv_out
    moved = t_rel.apply(points)
    uv, in_view = project_points(moved, k)
    uv, z = uv[in_view], moved[in_view, 2]
    if len(z) == 0:
        return depth_out, uv_out
    col = np.rint(uv[:, 0]).astype(np.int64)
    row = np.rint(uv[:, 1]).astype(np.int64)
    flat = row * k.width + col
    # nearest z first within each target pixel
    order = np.lexsort((z, flat))
    _, first = np.unique(flat[order], return_index=True)
    winners = order[first]
    depth_out[row[winners], col[winners]] = z[winners]
    uv_out[row[winners], col[winners]] = uv[winners]
    return depth_out, uv_out


def reproject_depth(src_depth: DepthRaster, t_rel: RigidPose, k: Intrinsics) -> DepthRaster:
    """Source depth expressed in the target camera (t_rel maps source to target coordinates)."""
    depth_out, _ = _splat(src_depth, t_rel, k)
    return DepthRaster(depth_out)


def reproject_depth_pair(src_depth: DepthRaster, tgt_depth: DepthRaster, t_rel: RigidPose, k: Intrinsics):
    """
    return: (warped source depth in the target camera,
             target depth bilinearly interpolated at the projected coordinates)
    Both are 0 where the other has no value.
    """
    tgt_depth.check(k)
    depth_out, uv_out = _splat(src_depth, t_rel, k)
    has_source = depth_out > 0
    interp = np.zeros(k.shape)
    interp[has_source] = sample_depth(tgt_depth, uv_out[has_source])
    both = has_source & (interp > 0)
    return DepthRaster(np.where(both, depth_out, 0.0)), DepthRaster(np.where(both, interp, 0.0))


def warp_view(src: ImageRaster, src_depth: DepthRaster, t_rel: RigidPose, k: Intrinsics):
    """
    Resample the source image into the target camera using the source depth.
    return: (warped ImageRaster, valid mask [H, W]); invalid pixels have no source and are set to 0.
    """
    src.check(k)
    src_depth.check(k)
    if src.values.shape[:2] != src_depth.values.shape:
        raise DimensionMismatchError('image and depth rasters differ in size')

    tgt_depth, _ = _splat(src_depth, t_rel, k)
    u, v = pixel_grid(k)
    has_source = tgt_depth > 0
    uv_src = np.full(k.shape + (2,), -2.0)
    valid = np.zeros(k.shape, dtype=bool)
    if has_source.any():
        points = backproject_points(np.stack([u[has_source], v[has_source]], axis=-1), tgt_depth[has_source], k)
        uv, in_view = project_points(t_rel.inverse().apply(points), k)
        uv_src[has_source] = np.where(in_view[:, None], uv, -2.0)
        valid[has_source] = in_view

    image = torch.as_tensor(src.values, dtype=torch.float64).permute(2, 0, 1)[None]
    grid = torch.as_tensor(uv_src, dtype=torch.float64)
    grid = torch.stack([
        2.0 * grid[..., 0] / max(k.width - 1, 1) - 1.0,
        2.0 * grid[..., 1] / max(k.height - 1, 1) - 1.0,
        ], dim=-1)[None]
    warped = F.grid_sample(image, grid, mode='bilinear', padding_mode='zeros', align_corners=True)
    warped = warped[0].permute(1, 2, 0).numpy()
    warped = np.where(valid[..., None], np.clip(warped, 0.0, 1.0), 0.0)
    return ImageRaster(warped), valid
