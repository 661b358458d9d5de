from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from src.geometry import Intrinsics, RigidPose
from src.utils.errors import DegenerateConfigurationError, InvalidInputError

from .filters import keypoint_correspondence_filter, match_descriptors, surface_area_filter
from .keypoints import Keypoints, MatchList
from .rigid import covariance_condition, estimate_rigid, residual_norms

__all__ = [
    'FilterConfig',
    'CorrespondenceSet',
    'validate_transform',
    'register_pair',
    ]


@dataclass(frozen=True)
class FilterConfig:
    min_matches: int = 10
    max_residual_cm: float = 0.02
    cond_threshold: float = 100.0
    kpf_distance_tol_cm: float = 0.5
    min_span_area_fraction: float = 0.01
    similarity_floor: float = 0.5

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise InvalidInputError(f'matching.{name} must be positive, got {value}')

    @classmethod
    def from_cfg(cls, cfg):
        return cls(**vars(cfg.matching))


@dataclass(eq=False)
class CorrespondenceSet:
    """
    Matches between frames i and j and the relative transform T_ij (frame i -> frame j).
    `matches` are the correspondence-filtered matches; once validated, `inliers` marks
    the ones under the residual threshold.
    """
    pair: tuple
    matches: MatchList
    kp_i: Keypoints
    kp_j: Keypoints
    transform: Optional[RigidPose] = None
    residuals: Optional[np.ndarray] = None
    inliers: Optional[np.ndarray] = None
    valid: bool = False
    raw_count: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def filtered_count(self):
        return len(self.matches)

    @property
    def inlier_count(self):
        return 0 if self.inliers is None else int(self.inliers.sum())

    @property
    def inlier_matches(self) -> MatchList:
        if self.inliers is None:
            return MatchList.empty()
        return self.matches.subset(self.inliers)

    def inlier_points(self):
        """Inlier 3D points (P_i in frame i, P_j in frame j)."""
        return self.inlier_matches.points(self.kp_i, self.kp_j)

    def reversed(self):
        """Same correspondences seen from (j, i)."""
        swapped = MatchList(self.matches.pairs[:, ::-1].copy(), self.matches.similarity)
        return CorrespondenceSet(
            pair=self.pair[::-1],
            matches=swapped,
            kp_i=self.kp_j,
            kp_j=self.kp_i,
            transform=None if self.transform is None else self.transform.inverse(),
            residuals=self.residuals,
            inliers=self.inliers,
            valid=self.valid,
            raw_count=self.raw_count,
            diagnostics=dict(self.diagnostics),
            )


def validate_transform(cs: CorrespondenceSet, k: Intrinsics, cfg: FilterConfig):
    """
    Valid iff inliers (residual < max_residual_cm) >= min_matches, the inlier source
    covariance condition number < cond_threshold and the surface area filter passes.
    Fills cs.residuals / cs.inliers / cs.valid / cs.diagnostics and returns (valid, diagnostics).
    """
    diagnostics = {'inliers': 0, 'condition': np.inf, 'span_fractions': [], 'reason': ''}
    if cs.transform is None or len(cs.matches) == 0:
        diagnostics['reason'] = 'no_transform'
        cs.valid = False
        cs.diagnostics.update(diagnostics)
        return False, cs.diagnostics

    p_i, p_j = cs.matches.points(cs.kp_i, cs.kp_j)
    cs.residuals = residual_norms(cs.transform, p_i, p_j)
    cs.inliers = cs.residuals < cfg.max_residual_cm
    inlier_i, inlier_j = p_i[cs.inliers], p_j[cs.inliers]
    diagnostics['inliers'] = int(cs.inliers.sum())
    diagnostics['condition'] = covariance_condition(inlier_i)
    area_ok, diagnostics['span_fractions'] = surface_area_filter(inlier_i, inlier_j, k, cfg, return_areas=True)

    if diagnostics['inliers'] < cfg.min_matches:
        diagnostics['reason'] = 'too_few_inliers'
    elif not diagnostics['condition'] < cfg.cond_threshold:
        diagnostics['reason'] = 'ill_conditioned'
    elif not area_ok:
        diagnostics['reason'] = 'small_span'
    cs.valid = diagnostics['reason'] == ''
    cs.diagnostics.update(diagnostics)
    return cs.valid, cs.diagnostics


def register_pair(kp_i: Keypoints, kp_j: Keypoints, k: Intrinsics, cfg: FilterConfig, pair=(None, None)) -> CorrespondenceSet:
    """Descriptor matching -> correspondence filter -> rigid fit -> inlier refit -> validation."""
    raw = match_descriptors(kp_i, kp_j, cfg)
    matches = keypoint_correspondence_filter(raw, kp_i, kp_j, cfg)
    cs = CorrespondenceSet(pair=tuple(pair), matches=matches, kp_i=kp_i, kp_j=kp_j, raw_count=len(raw))
    if len(matches) < 3:
        validate_transform(cs, k, cfg)
        return cs

    p_i, p_j = matches.points(kp_i, kp_j)
    try:
        transform = estimate_rigid(p_i, p_j)
        inliers = residual_norms(transform, p_i, p_j) < cfg.max_residual_cm
        if 3 <= inliers.sum() < len(matches):
            transform = estimate_rigid(p_i[inliers], p_j[inliers])
    except DegenerateConfigurationError as e:
        cs.diagnostics['degenerate'] = str(e)
        validate_transform(cs, k, cfg)
        return cs
    cs.transform = transform
    validate_transform(cs, k, cfg)
    return cs
