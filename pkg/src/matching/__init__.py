from .filters import (keypoint_correspondence_filter, match_descriptors,
                      span_area, surface_area_filter)
from .keypoints import Keypoints, MatchList, normalize_descriptors
from .registration import (CorrespondenceSet, FilterConfig, register_pair,
                           validate_transform)
from .rigid import covariance_condition, estimate_rigid, residual_norms
