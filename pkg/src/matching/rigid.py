import numpy as np

from src.geometry import RigidPose
from src.utils.errors import DegenerateConfigurationError, DimensionMismatchError

__all__ = [
    'estimate_rigid',
    'residual_norms',
    'covariance_condition',
    ]

RANK_TOL = 1e-9


def estimate_rigid(src, dst) -> RigidPose:
    """
    Least-squares rigid transform T minimizing sum ||T src - dst||^2
    (SVD of the cross-covariance with reflection fix).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise DimensionMismatchError(f'point sets must both be [N, 3], got {src.shape} and {dst.shape}')
    if len(src) < 3:
        raise DegenerateConfigurationError(f'rigid estimation needs at least 3 points, got {len(src)}')

    centroid_src = src.mean(0)
    centroid_dst = dst.mean(0)
    src_c = src - centroid_src
    dst_c = dst - centroid_dst
    spread = np.linalg.svd(src_c, compute_uv=False)
    if spread[0] == 0 or spread[1] <= RANK_TOL * spread[0]:
        raise DegenerateConfigurationError('source points are collinear (covariance rank < 2)')

    H = src_c.T @ dst_c
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    d = np.sign(np.linalg.det(V @ U.T))
    R = V @ np.diag([1.0, 1.0, d]) @ U.T
    t = centroid_dst - R @ centroid_src
    return RigidPose(R, t)


def residual_norms(transform: RigidPose, src, dst):
    return np.linalg.norm(transform.apply(src) - np.asarray(dst, dtype=np.float64), axis=-1)


def covariance_condition(points):
    """Condition number of the 3x3 covariance of the points (inf when rank-deficient)."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        return np.inf
    eigenvalues = np.linalg.eigvalsh(np.cov(points.T))
    if eigenvalues[0] <= RANK_TOL * max(eigenvalues[-1], RANK_TOL):
        return np.inf
    return float(eigenvalues[-1] / eigenvalues[0])
