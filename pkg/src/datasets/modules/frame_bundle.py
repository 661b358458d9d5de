from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.geometry import DepthRaster, ImageRaster, Intrinsics
from src.matching import Keypoints


@dataclass(eq=False)
class FrameBundle:
    """One frame of a sequence directory. uv / descriptors keep the raw .feat order."""
    frame_id: int
    image: ImageRaster
    depth: DepthRaster
    uv: np.ndarray
    descriptors: np.ndarray
    specular: Optional[np.ndarray] = None

    def keypoints(self, k: Intrinsics) -> Keypoints:
        return Keypoints.lift(self.uv, self.descriptors, self.depth, k)

    @property
    def keypoint_count(self):
        return len(self.uv)
