import numpy as np

from src.geometry import DepthRaster, Intrinsics, RigidPose, depth_to_points, project_points, sample_depth_nearest
from src.utils.errors import InvalidInputError

__all__ = [
    'frustum_overlap',
    ]


def frustum_overlap(frame_depth: DepthRaster, keyframe_depth: DepthRaster, frame_to_keyframe: RigidPose, k: Intrinsics, stride=4, depth_agreement=0.1):
    """
    Fraction of the frame's valid depth pixels (every `stride` pixels) that land inside
    the keyframe raster in front of the camera, on a valid keyframe depth that agrees
    within `depth_agreement` (relative).
    """
    frame_depth.check(k)
    keyframe_depth.check(k)
    points, _ = depth_to_points(frame_depth.values, k, stride)
    if len(points) == 0:
        raise InvalidInputError('frustum_overlap: frame has no valid depth pixels')
    moved = frame_to_keyframe.apply(points)
    uv, in_view = project_points(moved, k)
    seen = np.zeros(len(points), dtype=bool)
    if in_view.any():
        d_kf = sample_depth_nearest(keyframe_depth, uv[in_view])
        z = moved[in_view, 2]
        seen[in_view] = (d_kf > 0) & (np.abs(d_kf - z) <= depth_agreement * d_kf)
    return float(seen.mean())
