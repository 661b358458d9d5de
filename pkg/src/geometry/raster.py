from dataclasses import dataclass

import numpy as np

from src.utils.errors import DimensionMismatchError, InvalidInputError

from .camera import Intrinsics

__all__ = [
    'DepthRaster',
    'ImageRaster',
    'check_mask',
    'sample_depth',
    'sample_depth_nearest',
    ]


@dataclass(frozen=True, eq=False)
class DepthRaster:
    """Depth in cm, [H, W]; 0 marks an invalid pixel."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionMismatchError(f'depth raster must be 2D, got shape {values.shape}')
        if not np.all(np.isfinite(values)):
            raise InvalidInputError('depth raster has non-finite entries')
        if np.any(values < 0):
            raise InvalidInputError('depth raster has negative entries')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def valid(self):
        return self.values > 0

    def check(self, k: Intrinsics):
        if self.values.shape != k.shape:
            raise DimensionMismatchError(f'depth raster is {self.width}x{self.height}, intrinsics say {k.width}x{k.height}')
        return self


@dataclass(frozen=True, eq=False)
class ImageRaster:
    """RGB in [0, 1], [H, W, 3]."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 3:
            raise DimensionMismatchError(f'image raster must be [H, W, 3], got shape {values.shape}')
        if not np.all(np.isfinite(values)) or values.min(initial=0.0) < 0.0 or values.max(initial=0.0) > 1.0:
            raise InvalidInputError('image values must lie in [0, 1]')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def check(self, k: Intrinsics):
        if self.values.shape[:2] != k.shape:
            raise DimensionMismatchError(f'image raster is {self.width}x{self.height}, intrinsics say {k.width}x{k.height}')
        return self


def check_mask(mask, shape):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(shape):
        raise DimensionMismatchError(f'mask shape {mask.shape} does not match raster shape {tuple(shape)}')
    return mask


def _corners(values, uv):
    h, w = values.shape
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    inside = np.isfinite(uv).all(axis=1) & (uv[:, 0] >= 0) & (uv[:, 0] <= w - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= h - 1)
    u = np.where(inside, uv[:, 0], 0.0)
    v = np.where(inside, uv[:, 1], 0.0)
    x0 = np.clip(np.floor(u).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(v).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return inside, u - x0, v - y0, x0, x1, y0, y1


def sample_depth(depth: DepthRaster, uv):
    """
    Perspective-correct bilinear depth at subpixel positions (inverse depth is
    interpolated). 0 where any of the four neighbors is invalid or uv is out of view.
    """
    values = depth.values
    inside, ax, ay, x0, x1, y0, y1 = _corners(values, uv)
    d00, d01 = values[y0, x0], values[y0, x1]
    d10, d11 = values[y1, x0], values[y1, x1]
    ok = inside & (d00 > 0) & (d01 > 0) & (d10 > 0) & (d11 > 0)
    with np.errstate(divide='ignore', invalid='ignore'):
        inv = (1 - ay) * ((1 - ax) / d00 + ax / d01) + ay * ((1 - ax) / d10 + ax / d11)
    out = np.zeros(len(ok))
    out[ok] = 1.0 / inv[ok]
    return out


def sample_depth_nearest(depth: DepthRaster, uv):
    values = depth.values
    h, w = values.shape
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    inside = np.isfinite(uv).all(axis=1) & (uv[:, 0] >= 0) & (uv[:, 0] <= w - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= h - 1)
    col = np.rint(np.where(inside, uv[:, 0], 0)).astype(np.int64)
    row = np.rint(np.where(inside, uv[:, 1], 0)).astype(np.int64)
    return np.where(inside, values[row, col], 0.0)
