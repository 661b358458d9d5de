import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from src.geometry import Intrinsics, RigidPose
from src.utils.errors import InvalidInputError

from .volume import TsdfVolume

__all__ = [
    'FusionGate',
    'FragmentState',
    'fusion_scheduler',
    'FusionEvent',
    'FusionScheduler',
    ]


@dataclass(frozen=True)
class FusionGate:
    eps_f_na: int = 90
    eps_cf_d: float = 3.0

    def __post_init__(self):
        if not (self.eps_f_na > 0 and self.eps_cf_d > 0):
            raise InvalidInputError(f'fusion gate thresholds must be positive, got {self.eps_f_na}, {self.eps_cf_d}')

    @classmethod
    def from_cfg(cls, cfg):
        return cls(cfg.fusion.eps_f_na, cfg.fusion.eps_cf_d)


@dataclass
class FragmentState:
    fragment_id: int
    last_inspected: int
    keyframe_position: np.ndarray
    fused: bool = False


def fusion_scheduler(states: Iterable[FragmentState], current_frame, current_position, gate: FusionGate) -> List[int]:
    """Fragments not yet fused whose last inspection and keyframe are both far enough behind."""
    current_position = np.asarray(current_position, dtype=np.float64)
    selected = []
    for state in states:
        if state.fused:
            continue
        elapsed = current_frame - state.last_inspected
        distance = float(np.linalg.norm(current_position - np.asarray(state.keyframe_position)))
        if elapsed > gate.eps_f_na and distance > gate.eps_cf_d:
            selected.append(state.fragment_id)
    return selected


@dataclass
class FusionEvent:
    fragment_id: int
    frame_id: Optional[int]
    frames: int

    @property
    def flushed(self):
        return self.frame_id is None


@dataclass
class FusionScheduler:
    """
    Replays the optimized trajectory in frame order and fuses every fragment once the
    gate lets it go; whatever is left is flushed after the last frame.

    last_inspected_at(fragment_id, frame_id) returns the latest frame <= frame_id at which
    the fragment was observed. load_frame(frame_id) returns (DepthRaster, ImageRaster).
    """
    gate: FusionGate
    volume: TsdfVolume
    k: Intrinsics
    load_frame: Callable
    last_inspected_at: Callable
    events: List[FusionEvent] = field(default_factory=list)

    def fuse_fragment(self, members, frame_poses: Dict[int, RigidPose]):
        count = 0
        for frame_id in members:
            if frame_id not in frame_poses:
                continue
            depth, image = self.load_frame(frame_id)
            self.volume.integrate(depth, image, frame_poses[frame_id], self.k)
            count += 1
        return count

    def run(self, fragments, frame_poses: Dict[int, RigidPose], keyframe_poses: Dict[int, RigidPose], pbar=None):
        """fragments: the fragments to fuse (keyframe in keyframe_poses)."""
        fragments = [f for f in fragments if f.keyframe in keyframe_poses]
        states = {
            f.id: FragmentState(f.id, f.keyframe, keyframe_poses[f.keyframe].translation)
            for f in fragments
            }
        by_id = {f.id: f for f in fragments}
        for frame_id in sorted(frame_poses):
            live = []
            for f in fragments:
                if f.keyframe > frame_id:
                    continue
                state = states[f.id]
                state.last_inspected = self.last_inspected_at(f.id, frame_id)
                live.append(state)
            for fragment_id in fusion_scheduler(live, frame_id, frame_poses[frame_id].translation, self.gate):
                frames = self.fuse_fragment(by_id[fragment_id].members, frame_poses)
                states[fragment_id].fused = True
                self.events.append(FusionEvent(fragment_id, frame_id, frames))
            if pbar is not None:
                pbar.update(1)

        for fragment_id, state in states.items():
            if not state.fused:
                frames = self.fuse_fragment(by_id[fragment_id].members, frame_poses)
                state.fused = True
                self.events.append(FusionEvent(fragment_id, None, frames))
        if not any(e.frames for e in self.events):
            warnings.warn('fusion integrated no frames')
        return self.volume

    @property
    def fused_fragments(self):
        return [e.fragment_id for e in self.events]
