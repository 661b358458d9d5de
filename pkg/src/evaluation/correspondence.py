from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from src.geometry import (DepthRaster, Intrinsics, RigidPose, backproject_points,
                          depth_to_points, project_points, sample_depth)
from src.utils.errors import MissingGroundTruthError

__all__ = [
    'GtFrame',
    'PrecisionRecall',
    'gt_correspondences',
    'correspondence_pr',
    'group_matches',
    ]


@dataclass(eq=False)
class GtFrame:
    """Keypoint pixels (raw .feat order) with ground-truth depth and camera-to-world pose."""
    uv: np.ndarray
    depth: DepthRaster
    pose: RigidPose


@dataclass
class PrecisionRecall:
    precision: Optional[float]
    recall: Optional[float]
    true_positives: int
    predicted: int
    ground_truth: int

    def as_dict(self):
        return {
            'precision': self.precision,
            'recall': self.recall,
            'true_positives': self.true_positives,
            'predicted': self.predicted,
            'ground_truth': self.ground_truth,
            }


def _world_points(frame: GtFrame, k: Intrinsics):
    """World points of the keypoints with valid gt depth, and their raw indices."""
    d = sample_depth(frame.depth, frame.uv)
    valid = d > 0
    if not valid.any():
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    cam = backproject_points(frame.uv[valid], d[valid], k)
    return frame.pose.apply(cam), np.flatnonzero(valid)


def _depth_cloud_bounds(frame: GtFrame, k: Intrinsics):
    points, _ = depth_to_points(frame.depth.values, k)
    if len(points) == 0:
        return None
    world = frame.pose.apply(points)
    return world.min(axis=0), world.max(axis=0)


def gt_correspondences(frame_i: GtFrame, frame_j: GtFrame, k: Intrinsics, tol_fraction=0.01, occlusion_tol=0.05) -> Set[Tuple[int, int]]:
    """
    Keypoints of frame i moved into frame j with ground-truth depth and poses, kept when
    visible in j with agreeing gt depth (relative occlusion_tol), then paired with the
    nearest keypoint of j within tol_fraction of the bounding-box diagonal of both frames'
    full gt depth clouds.
    """
    world_i, idx_i = _world_points(frame_i, k)
    world_j, idx_j = _world_points(frame_j, k)
    if len(world_i) == 0 or len(world_j) == 0:
        return set()

    cam_j = frame_j.pose.inverse().apply(world_i)
    uv, in_view = project_points(cam_j, k)
    d_j = sample_depth(frame_j.depth, uv)
    visible = in_view & (d_j > 0) & (np.abs(d_j - cam_j[:, 2]) <= occlusion_tol * np.where(d_j > 0, d_j, 1.0))
    if not visible.any():
        return set()

    bounds = [b for b in (_depth_cloud_bounds(frame_i, k), _depth_cloud_bounds(frame_j, k)) if b is not None]
    lo = np.min([b[0] for b in bounds], axis=0)
    hi = np.max([b[1] for b in bounds], axis=0)
    radius = tol_fraction * float(np.linalg.norm(hi - lo))
    distance, nearest = cKDTree(world_j).query(world_i[visible], k=1)
    keep = distance <= radius
    return set(zip(idx_i[visible][keep].tolist(), idx_j[nearest[keep]].tolist()))


def group_matches(rows: Iterable) -> Dict[Tuple[int, int], Set[Tuple[int, int]]]:
    """(frame_a, frame_b, kp_a, kp_b) rows -> {(frame_a, frame_b): {(kp_a, kp_b)}}"""
    grouped = {}
    for fa, fb, ka, kb in rows:
        grouped.setdefault((int(fa), int(fb)), set()).add((int(ka), int(kb)))
    return grouped


def correspondence_pr(pred_matches, frames: Dict[int, GtFrame], k: Intrinsics, pairs=None, tol_fraction=0.01, occlusion_tol=0.05) -> PrecisionRecall:
    """
    Micro-averaged precision and recall of predicted keypoint matches against the
    geometric ground truth, over `pairs` (default: the pairs present in pred_matches).
    pred_matches maps (frame_a, frame_b) to a set of (kp_a, kp_b) raw indices. A ratio
    whose denominator is zero is reported as None.
    """
    pairs = sorted(pred_matches) if pairs is None else sorted(pairs)
    tp = n_pred = n_gt = 0
    for a, b in pairs:
        missing = [f for f in (a, b) if f not in frames]
        if missing:
            raise MissingGroundTruthError(f'no ground truth for frame {missing[0]}')
        gt = gt_correspondences(frames[a], frames[b], k, tol_fraction, occlusion_tol)
        pred = set(pred_matches.get((a, b), set()))
        tp += len(pred & gt)
        n_pred += len(pred)
        n_gt += len(gt)
    return PrecisionRecall(
        precision=tp / n_pred if n_pred else None,
        recall=tp / n_gt if n_gt else None,
        true_positives=tp,
        predicted=n_pred,
        ground_truth=n_gt,
        )
