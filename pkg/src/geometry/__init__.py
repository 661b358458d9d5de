from .camera import (Intrinsics, backproject, backproject_points,
                     depth_to_points, pixel_grid, project, project_points)
from .pose import RigidPose, compose, invert, so3_exp, so3_hat
from .raster import (DepthRaster, ImageRaster, check_mask, sample_depth,
                     sample_depth_nearest)
from .warping import reproject_depth, reproject_depth_pair, warp_view
