import numpy as np
from scipy.spatial.distance import cdist

from src.geometry import Intrinsics

from .keypoints import Keypoints, MatchList

__all__ = [
    'match_descriptors',
    'keypoint_correspondence_filter',
    'span_area',
    'surface_area_filter',
    ]


def match_descriptors(kp_i: Keypoints, kp_j: Keypoints, cfg) -> MatchList:
    """Mutual nearest neighbours under cosine similarity, kept when similarity >= cfg.similarity_floor."""
    if len(kp_i) == 0 or len(kp_j) == 0:
        return MatchList.empty()
    similarity = kp_i.descriptors @ kp_j.descriptors.T
    best_j = similarity.argmax(1)
    best_i = similarity.argmax(0)
    a = np.arange(len(kp_i))
    mutual = best_i[best_j] == a
    score = similarity[a, best_j]
    keep = mutual & (score >= cfg.similarity_floor)
    return MatchList(np.stack([a[keep], best_j[keep]], axis=-1).astype(np.int64), score[keep])


def keypoint_correspondence_filter(matches: MatchList, kp_i: Keypoints, kp_j: Keypoints, cfg) -> MatchList:
    """
    Greedy pairwise-rigidity pruning: while any pair of surviving matches disagrees in
    point distance by more than cfg.kpf_distance_tol_cm, drop the match with the most
    violations (lowest position on ties).
    """
    if len(matches) < 2:
        return matches
    p_i, p_j = matches.points(kp_i, kp_j)
    violated = np.abs(cdist(p_i, p_i) - cdist(p_j, p_j)) > cfg.kpf_distance_tol_cm
    counts = violated.sum(1)
    alive = np.ones(len(matches), dtype=bool)
    while True:
        masked = np.where(alive, counts, -1)
        worst = int(masked.argmax())
        if masked[worst] <= 0:
            break
        alive[worst] = False
        counts -= violated[:, worst]
        counts[worst] = 0
    return matches.subset(alive)


def span_area(points):
    """Bounding area of the points projected on their two principal axes."""
    points = np.asarray(points, dtype=np.float64)
    centered = points - points.mean(0)
    _, _, Vt = np.linalg.svd(centered, full_matrices=False)
    projected = centered @ Vt[:2].T
    extent = projected.max(0) - projected.min(0)
    return float(extent[0] * extent[1])


def _passes(points, k: Intrinsics, fraction):
    if len(points) < 3:
        return False, 0.0, np.inf
    z = float(np.median(points[:, 2]))
    image_area = (k.width * z / k.fx) * (k.height * z / k.fy)
    area = span_area(points)
    return area >= fraction * image_area, area, image_area


def surface_area_filter(points_i, points_j, k: Intrinsics, cfg, return_areas=False):
    """
    Pass iff the matched points of each frame span at least cfg.min_span_area_fraction of the
    image footprint at their median depth. Fewer than 3 points fail.
    points_j may be None to test a single frame.
    """
    ok_i, area_i, ref_i = _passes(np.asarray(points_i, dtype=np.float64).reshape(-1, 3), k, cfg.min_span_area_fraction)
    ok, areas = ok_i, [area_i / ref_i]
    if points_j is not None:
        ok_j, area_j, ref_j = _passes(np.asarray(points_j, dtype=np.float64).reshape(-1, 3), k, cfg.min_span_area_fraction)
        ok = ok and ok_j
        areas.append(area_j / ref_j)
    return (ok, areas) if return_areas else ok
