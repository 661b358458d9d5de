import numpy as np

from src.geometry import RigidPose
from src.utils.errors import DimensionMismatchError, InvalidInputError

__all__ = [
    'edge_residuals',
    'edge_inconsistency',
    'edge_jacobians',
    'batch_hat',
    ]


def _check_points(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimensionMismatchError(f'points must be [N, 3], got {points.shape}')
    if len(points) == 0:
        raise InvalidInputError('empty correspondence point set')
    return points


def batch_hat(v):
    """[N, 3] -> [N, 3, 3] skew-symmetric matrices."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def edge_residuals(pose_i: RigidPose, pose_j: RigidPose, transform: RigidPose, points):
    """r_k = T_j^-1 T_i p_k - T_ij p_k, one row per point."""
    points = _check_points(points)
    world = pose_i.apply(points)
    # row-wise R_j^T (q - t_j)
    return (world - pose_j.translation) @ pose_j.rotation - transform.apply(points)


def edge_inconsistency(pose_i: RigidPose, pose_j: RigidPose, transform: RigidPose, points):
    """g(T_i, T_j, T_ij) = sum_k ||T_j^-1 T_i p_k - T_ij p_k||^2"""
    r = edge_residuals(pose_i, pose_j, transform, points)
    return float(np.sum(r * r))


def edge_jacobians(pose_i: RigidPose, pose_j: RigidPose, points):
    """
    Derivatives of the residuals with respect to left increments [omega, v] of T_i and
    T_j, each [N, 3, 6].
    """
    points = _check_points(points)
    world = pose_i.apply(points)
    rt = pose_j.rotation.T
    rt_hat = rt @ batch_hat(world)
    n = len(points)
    jac_i = np.empty((n, 3, 6))
    jac_j = np.empty((n, 3, 6))
    jac_i[:, :, :3] = -rt_hat
    jac_i[:, :, 3:] = rt
    jac_j[:, :, :3] = rt_hat
    jac_j[:, :, 3:] = -rt
    return jac_i, jac_j
