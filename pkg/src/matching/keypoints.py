from dataclasses import dataclass

import numpy as np

from src.geometry import DepthRaster, Intrinsics, backproject_points, sample_depth
from src.utils.errors import DimensionMismatchError, InvalidInputError

__all__ = [
    'Keypoints',
    'MatchList',
    'normalize_descriptors',
    ]


def normalize_descriptors(descriptors):
    descriptors = np.asarray(descriptors, dtype=np.float64)
    norms = np.linalg.norm(descriptors, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise InvalidInputError('zero-length descriptor')
    return descriptors / norms


@dataclass(frozen=True, eq=False)
class Keypoints:
    """
    Keypoints of one frame that carry a valid depth.
    uv [N, 2], depth [N] cm, points [N, 3] camera-space cm, descriptors [N, c] unit-norm,
    index [N] position in the frame's raw keypoint list (the .feat order).
    """
    uv: np.ndarray
    depth: np.ndarray
    points: np.ndarray
    descriptors: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.index)

    @classmethod
    def empty(cls, descriptor_dim=128):
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 3)), np.zeros((0, descriptor_dim)), np.zeros(0, dtype=np.int64))

    @classmethod
    def lift(cls, uv, descriptors, depth: DepthRaster, k: Intrinsics):
        """Sample depth under each keypoint and backproject; keypoints without valid depth are dropped."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        descriptors = np.asarray(descriptors, dtype=np.float64)
        if descriptors.ndim != 2 or len(descriptors) != len(uv):
            raise DimensionMismatchError(f'{len(uv)} keypoints but descriptors of shape {descriptors.shape}')
        if len(uv) == 0:
            return cls.empty(descriptors.shape[1])
        d = sample_depth(depth, uv)
        keep = d > 0
        index = np.flatnonzero(keep)
        if len(index) == 0:
            return cls.empty(descriptors.shape[1])
        return cls(
            uv=uv[keep],
            depth=d[keep],
            points=backproject_points(uv[keep], d[keep], k),
            descriptors=normalize_descriptors(descriptors[keep]),
            index=index,
            )


@dataclass(frozen=True, eq=False)
class MatchList:
    """pairs [M, 2] positions into (Keypoints_i, Keypoints_j); similarity [M] cosine."""
    pairs: np.ndarray
    similarity: np.ndarray

    def __len__(self):
        return len(self.pairs)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2), dtype=np.int64), np.zeros(0))

    def subset(self, keep):
        return MatchList(self.pairs[keep], self.similarity[keep])

    def points(self, kp_i: Keypoints, kp_j: Keypoints):
        return kp_i.points[self.pairs[:, 0]], kp_j.points[self.pairs[:, 1]]

    def raw_indices(self, kp_i: Keypoints, kp_j: Keypoints):
        """Matches as [M, 2] indices into the raw keypoint lists."""
        return np.stack([kp_i.index[self.pairs[:, 0]], kp_j.index[self.pairs[:, 1]]], axis=-1)
