"""
Pinhole camera model.

Pixel (u, v) has its center at integer coordinates, so a projection is in view
when 0 <= u <= width - 1 and 0 <= v <= height - 1. Depth is the camera-space z
in centimeters.
"""
from dataclasses import dataclass

import numpy as np

from src.utils.errors import InvalidInputError

__all__ = [
    'Intrinsics',
    'project',
    'project_points',
    'backproject',
    'backproject_points',
    'depth_to_points',
    'pixel_grid',
    ]


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError(f'focal lengths must be positive, got fx={self.fx}, fy={self.fy}')
        if not (int(self.width) == self.width and int(self.height) == self.height and self.width > 0 and self.height > 0):
            raise InvalidInputError(f'raster size must be positive integers, got {self.width}x{self.height}')
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError(f'principal point ({self.cx}, {self.cy}) outside the {self.width}x{self.height} raster')
        object.__setattr__(self, 'width', int(self.width))
        object.__setattr__(self, 'height', int(self.height))

    @property
    def matrix(self):
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
            ])

    @property
    def shape(self):
        return (self.height, self.width)

    def in_view(self, uv):
        uv = np.asarray(uv, dtype=np.float64)
        return (uv[..., 0] >= 0) & (uv[..., 0] <= self.width - 1) & (uv[..., 1] >= 0) & (uv[..., 1] <= self.height - 1)

    def to_line(self):
        return f'{self.fx!r} {self.fy!r} {self.cx!r} {self.cy!r} {self.width} {self.height}'

    @classmethod
    def from_line(cls, line):
        fields = line.split()
        if len(fields) != 6:
            raise InvalidInputError(f'expected "fx fy cx cy width height", got {line.strip()!r}')
        fx, fy, cx, cy = map(float, fields[:4])
        width, height = (int(float(x)) for x in fields[4:])
        return cls(fx, fy, cx, cy, width, height)


def project_points(points, k: Intrinsics):
    """
    points: [N, 3] camera-space cm
    return: uv [N, 2] (NaN where z <= 0), in_view [N] bool
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    front = z > 0
    uv = np.full((len(points), 2), np.nan)
    uv[front, 0] = k.fx * points[front, 0] / z[front] + k.cx
    uv[front, 1] = k.fy * points[front, 1] / z[front] + k.cy
    in_view = front & k.in_view(np.nan_to_num(uv, nan=-1.0))
    return uv, in_view


def project(p, k: Intrinsics):
    """Returns (u, v), or None when the point is behind the camera or outside the raster."""
    uv, in_view = project_points(np.asarray(p, dtype=np.float64)[None], k)
    if not in_view[0]:
        return None
    return float(uv[0, 0]), float(uv[0, 1])


def backproject_points(uv, depth, k: Intrinsics):
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    depth = np.asarray(depth, dtype=np.float64).reshape(-1)
    if np.any(~(depth > 0)):
        raise InvalidInputError('backprojection needs positive depth')
    x = (uv[:, 0] - k.cx) / k.fx * depth
    y = (uv[:, 1] - k.cy) / k.fy * depth
    return np.stack([x, y, depth], axis=-1)


def backproject(uv, d, k: Intrinsics):
    return backproject_points(np.asarray(uv, dtype=np.float64)[None], [d], k)[0]


def pixel_grid(k: Intrinsics, stride=1):
    """Integer pixel centers as (u [h, w], v [h, w]) sampled every `stride` pixels."""
    v, u = np.mgrid[0:k.height:stride, 0:k.width:stride]
    return u.astype(np.float64), v.astype(np.float64)


def depth_to_points(depth_values, k: Intrinsics, stride=1):
    """
    Backproject the valid pixels of a depth grid.
    return: points [N, 3], uv [N, 2]
    """
    u, v = pixel_grid(k, stride)
    d = np.asarray(depth_values, dtype=np.float64)[::stride, ::stride]
    valid = d > 0
    uv = np.stack([u[valid], v[valid]], axis=-1)
    if len(uv) == 0:
        return np.zeros((0, 3)), uv
    return backproject_points(uv, d[valid], k), uv
