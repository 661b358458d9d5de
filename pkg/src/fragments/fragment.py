from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List

from src.geometry import RigidPose
from src.utils.errors import InvalidInputError

__all__ = [
    'FragmentConfig',
    'FragmentDecision',
    'Fragment',
    'should_create_fragment',
    ]


@dataclass(frozen=True)
class FragmentConfig:
    min_consecutive_corrs: int = 100
    min_frustum_overlap: float = 0.85
    frustum_stride: int = 4
    depth_agreement: float = 0.1

    def __post_init__(self):
        if not 0 < self.min_frustum_overlap <= 1:
            raise InvalidInputError(f'fragments.min_frustum_overlap must lie in (0, 1], got {self.min_frustum_overlap}')
        if not (self.min_consecutive_corrs > 0 and self.frustum_stride > 0 and self.depth_agreement > 0):
            raise InvalidInputError('fragment counts, stride and depth agreement must be positive')

    @classmethod
    def from_cfg(cls, cfg):
        return cls(**vars(cfg.fragments))


class FragmentDecision(Enum):
    APPEND = 'append'
    NEW_FRAGMENT = 'new_fragment'


def should_create_fragment(corr_count, overlap, cfg: FragmentConfig) -> FragmentDecision:
    if corr_count < cfg.min_consecutive_corrs or overlap < cfg.min_frustum_overlap:
        return FragmentDecision.NEW_FRAGMENT
    return FragmentDecision.APPEND


@dataclass(eq=False)
class Fragment:
    """
    Consecutive frames anchored at a keyframe (the first member).
    local_poses[m] maps member m coordinates into keyframe coordinates.
    intra_edges are the validated correspondence sets between members.
    """
    id: int
    keyframe: int
    members: List[int] = field(default_factory=list)
    local_poses: Dict[int, RigidPose] = field(default_factory=dict)
    intra_edges: list = field(default_factory=list)
    active: bool = True
    last_inspected: int = -1
    lone_at_creation: bool = False

    def append(self, frame_id, local_pose: RigidPose):
        assert not self.members or frame_id == self.members[-1] + 1, f'fragment {self.id}: frame {frame_id} is not contiguous'
        self.members.append(frame_id)
        self.local_poses[frame_id] = local_pose
        self.last_inspected = max(self.last_inspected, frame_id)

    def __len__(self):
        return len(self.members)
