from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from src.utils.errors import DimensionMismatchError, InvalidInputError

__all__ = [
    'RigidPose',
    'compose',
    'invert',
    'so3_hat',
    'so3_exp',
    ]

ORTHONORMAL_TOL = 1e-9


def so3_hat(w):
    w = np.asarray(w, dtype=np.float64)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
        ])


def so3_exp(w):
    return Rotation.from_rotvec(np.asarray(w, dtype=np.float64)).as_matrix()


@dataclass(frozen=True, eq=False)
class RigidPose:
    """
    SE(3) element p -> R p + t, translation in cm.

    Frame poses map camera coordinates to world coordinates. A relative
    transform T_ij maps coordinates of frame i into frame j.
    """
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise DimensionMismatchError(f'pose needs a 3x3 rotation and a 3-vector, got {rotation.shape} and {translation.shape}')
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise InvalidInputError('pose has non-finite entries')
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > ORTHONORMAL_TOL or abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOL:
            raise InvalidInputError('rotation is not orthonormal with det +1')
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (4, 4):
            raise DimensionMismatchError(f'expected a 4x4 matrix, got {matrix.shape}')
        return cls(matrix[:3, :3], matrix[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec, translation):
        return cls(so3_exp(rotvec), translation)

    @classmethod
    def from_quaternion(cls, xyzw, translation):
        return cls(Rotation.from_quat(np.asarray(xyzw, dtype=np.float64)).as_matrix(), translation)

    @property
    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def quaternion(self):
        """Unit quaternion (qx, qy, qz, qw) with qw >= 0."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other: 'RigidPose'):
        """(self ∘ other)(p) = self(other(p))"""
        return RigidPose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: 'RigidPose'):
        return self.compose(other)

    def inverse(self):
        rotation_t = self.rotation.T
        return RigidPose(rotation_t, -rotation_t @ self.translation)

    def retract(self, delta):
        """Left update with a 6-vector [omega, v]: (Exp(omega) R, Exp(omega) t + v)."""
        delta = np.asarray(delta, dtype=np.float64)
        rot = so3_exp(delta[:3])
        # re-projected onto SO(3) so long update chains stay within tolerance
        rotation = Rotation.from_matrix(rot @ self.rotation).as_matrix()
        return RigidPose(rotation, rot @ self.translation + delta[3:])

    def rotation_angle_to(self, other: 'RigidPose'):
        return float(np.linalg.norm(Rotation.from_matrix(self.rotation.T @ other.rotation).as_rotvec()))

    def allclose(self, other: 'RigidPose', atol=1e-9):
        return bool(np.allclose(self.rotation, other.rotation, atol=atol, rtol=0) and np.allclose(self.translation, other.translation, atol=atol, rtol=0))

    def __repr__(self):
        return f'RigidPose(rotvec={Rotation.from_matrix(self.rotation).as_rotvec().round(6).tolist()}, t={self.translation.round(6).tolist()})'


def compose(a: RigidPose, b: RigidPose):
    return a.compose(b)


def invert(a: RigidPose):
    return a.inverse()
