from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.spatial import cKDTree

from src.geometry import RigidPose
from src.utils.errors import DimensionMismatchError, InvalidInputError, MissingGroundTruthError

__all__ = [
    'ALIGNMENT_MODES',
    'AteReport',
    'umeyama_alignment',
    'ate',
    'nearest_pose_distance',
    'loop_closure_gap',
    ]

ALIGNMENT_MODES = ('similarity', 'rigid', 'first_frame')


@dataclass
class AteReport:
    rmse: float
    std: float
    mean: float
    errors: np.ndarray
    frame_ids: List[int]
    rotation: np.ndarray
    translation: np.ndarray
    scale: float
    mode: str = 'similarity'
    extra: Dict = field(default_factory=dict)

    def as_dict(self):
        return {'rmse': self.rmse, 'std': self.std, 'mean': self.mean, 'scale': self.scale, 'frames': len(self.frame_ids), 'mode': self.mode}


def umeyama_alignment(src, dst, with_scale=True):
    """
    Closed-form (R, t, s) minimizing sum ||s R src_k + t - dst_k||^2.
    src, dst: [N, 3]
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise DimensionMismatchError(f'alignment needs two [N, 3] arrays, got {src.shape} and {dst.shape}')
    mu_src, mu_dst = src.mean(axis=0), dst.mean(axis=0)
    src_c, dst_c = src - mu_src, dst - mu_dst
    cov = dst_c.T @ src_c / len(src)
    u, d, vt = np.linalg.svd(cov)
    s_fix = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_fix[2, 2] = -1.0
    rotation = u @ s_fix @ vt
    scale = 1.0
    if with_scale:
        var_src = np.mean(np.sum(src_c ** 2, axis=1))
        if var_src <= 0:
            raise InvalidInputError('cannot estimate scale of a trajectory without spatial extent')
        scale = float(np.trace(np.diag(d) @ s_fix) / var_src)
    translation = mu_dst - scale * rotation @ mu_src
    return rotation, translation, scale


def ate(pred: Dict[int, RigidPose], gt: Dict[int, RigidPose], mode='similarity') -> AteReport:
    """
    Absolute trajectory error over the predicted frames, camera positions only.
    mode: 'similarity' (default), 'rigid', or 'first_frame' (align the first shared pose).
    std is the standard deviation of the per-frame errors.
    """
    if mode not in ALIGNMENT_MODES:
        raise InvalidInputError(f'unknown alignment mode "{mode}", choose from {list(ALIGNMENT_MODES)}')
    missing = sorted(set(pred) - set(gt))
    if missing:
        raise MissingGroundTruthError(f'no ground-truth pose for frame {missing[0]}')
    ids = sorted(pred)
    if len(ids) < 3:
        raise InvalidInputError(f'ATE needs at least 3 poses, got {len(ids)}')

    p = np.array([pred[i].translation for i in ids])
    g = np.array([gt[i].translation for i in ids])
    if mode == 'first_frame':
        anchor = gt[ids[0]] @ pred[ids[0]].inverse()
        rotation, translation, scale = anchor.rotation, anchor.translation, 1.0
    else:
        rotation, translation, scale = umeyama_alignment(p, g, with_scale=mode == 'similarity')

    aligned = scale * p @ rotation.T + translation
    errors = np.linalg.norm(aligned - g, axis=1)
    return AteReport(
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        std=float(np.std(errors)),
        mean=float(np.mean(errors)),
        errors=errors,
        frame_ids=ids,
        rotation=rotation,
        translation=translation,
        scale=float(scale),
        mode=mode,
        )


def nearest_pose_distance(positions_a, positions_b):
    """Mean distance from each position of a to its nearest position in b."""
    positions_a = np.asarray(positions_a, dtype=np.float64).reshape(-1, 3)
    positions_b = np.asarray(positions_b, dtype=np.float64).reshape(-1, 3)
    if len(positions_a) == 0 or len(positions_b) == 0:
        raise InvalidInputError('nearest pose distance needs two nonempty trajectories')
    distance, _ = cKDTree(positions_b).query(positions_a, k=1)
    return float(distance.mean())


def loop_closure_gap(poses: Dict[int, RigidPose], turn_frame):
    """
    Mean nearest-pose distance between the backward half (frames >= turn_frame) and the
    forward half of a sequence that retraces its own path.
    """
    forward = [poses[i].translation for i in sorted(poses) if i < turn_frame]
    backward = [poses[i].translation for i in sorted(poses) if i >= turn_frame]
    return nearest_pose_distance(backward, forward)
