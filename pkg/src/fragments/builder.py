from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Optional

from src.geometry import DepthRaster, Intrinsics, RigidPose
from src.matching import CorrespondenceSet, FilterConfig, Keypoints, register_pair

from .connectivity import ConnectivityGraph
from .fragment import Fragment, FragmentConfig, FragmentDecision, should_create_fragment
from .overlap import frustum_overlap

__all__ = [
    'FrameRecord',
    'FragmentBuilder',
    ]


@dataclass
class FrameRecord:
    frame_id: int
    fragment_id: int
    decision: Optional[FragmentDecision]
    raw_matches: int = 0
    filtered_matches: int = 0
    inliers: int = 0
    overlap: float = 1.0
    keyframe_edges: int = 0


class FragmentBuilder:
    """
    Online fragment construction. Frames are fed in temporal order; each one either
    joins the active fragment or opens a new one whose keyframe is registered against
    every earlier keyframe.
    """
    def __init__(self, k: Intrinsics, filter_cfg: FilterConfig, fragment_cfg: FragmentConfig, registration_workers=1):
        self.k = k
        self.filter_cfg = filter_cfg
        self.fragment_cfg = fragment_cfg
        self.executor = ThreadPoolExecutor(max_workers=max(1, registration_workers))

        self.fragments: list[Fragment] = []
        self.graph = ConnectivityGraph()
        self.keyframe_data = {}
        self.initial_keyframe_poses = {}
        self.frame_to_fragment = {}
        self.records: list[FrameRecord] = []
        self.consecutive: list[CorrespondenceSet] = []
        self.inspections = {}
        self._prev = None

    def __enter__(self):
        return self

    def __exit__(self, *_):
        self.close()

    def close(self):
        self.executor.shutdown(wait=True)

    @property
    def active(self) -> Fragment:
        return self.fragments[-1]

    @property
    def root(self):
        return self.fragments[0].keyframe

    def fragment_of_keyframe(self, kf) -> Fragment:
        return self.fragments[self.frame_to_fragment[kf]]

    def _inspect(self, fragment: Fragment, frame_id):
        fragment.last_inspected = max(fragment.last_inspected, frame_id)
        self.inspections.setdefault(fragment.id, []).append(frame_id)

    def _open_fragment(self, frame_id, keypoints, depth, initial_pose: RigidPose):
        if self.fragments:
            self.active.active = False
        fragment = Fragment(id=len(self.fragments), keyframe=frame_id)
        fragment.append(frame_id, RigidPose.identity())
        self.fragments.append(fragment)
        self.frame_to_fragment[frame_id] = fragment.id
        self.keyframe_data[frame_id] = (keypoints, depth)
        self.initial_keyframe_poses[frame_id] = initial_pose
        self.graph.add_keyframe(frame_id)
        self._inspect(fragment, frame_id)
        return fragment

    def register_keyframe(self, new_kf):
        """Register the new keyframe against all earlier keyframes; every valid result becomes an edge."""
        kp_new, _ = self.keyframe_data[new_kf]
        prior = [kf for kf in self.graph.keyframes if kf != new_kf]
        register = partial(register_pair, k=self.k, cfg=self.filter_cfg)
        # map keeps submission order, so edges are added deterministically
        results = list(self.executor.map(
            lambda kf: register(self.keyframe_data[kf][0], kp_new, pair=(kf, new_kf)),
            prior,
            ))
        edges = [cs for cs in results if cs.valid]
        for cs in edges:
            self.graph.add_edge(cs)
            self._inspect(self.fragment_of_keyframe(cs.pair[0]), new_kf)
        fragment = self.fragment_of_keyframe(new_kf)
        fragment.lone_at_creation = new_kf not in self.graph.component_of(self.root)
        return edges

    def process(self, frame_id, keypoints: Keypoints, depth: DepthRaster) -> FrameRecord:
        depth.check(self.k)
        if self._prev is None:
            fragment = self._open_fragment(frame_id, keypoints, depth, RigidPose.identity())
            record = FrameRecord(frame_id, fragment.id, None, len(keypoints), len(keypoints), len(keypoints))
            self.records.append(record)
            self._prev = (frame_id, keypoints, depth)
            return record

        prev_id, prev_kp, _ = self._prev
        assert frame_id == prev_id + 1, f'frames must be contiguous, got {frame_id} after {prev_id}'
        active = self.active
        kf = active.keyframe
        kf_kp, kf_depth = self.keyframe_data[kf]

        cs_prev = register_pair(prev_kp, keypoints, self.k, self.filter_cfg, pair=(prev_id, frame_id))
        self.consecutive.append(cs_prev)
        cs_kf = cs_prev if kf == prev_id else register_pair(kf_kp, keypoints, self.k, self.filter_cfg, pair=(kf, frame_id))

        # frame -> keyframe transform: direct registration first, chained through prev otherwise
        l_prev = active.local_poses[prev_id]
        if cs_kf.valid:
            to_keyframe = cs_kf.transform.inverse()
        elif cs_prev.valid:
            to_keyframe = l_prev @ cs_prev.transform.inverse()
        else:
            to_keyframe = None
        overlap = 0.0
        if to_keyframe is not None and depth.valid.any():
            overlap = frustum_overlap(depth, kf_depth, to_keyframe, self.k, self.fragment_cfg.frustum_stride, self.fragment_cfg.depth_agreement)

        decision = should_create_fragment(cs_prev.filtered_count, overlap, self.fragment_cfg)
        record = FrameRecord(
            frame_id=frame_id,
            fragment_id=active.id,
            decision=decision,
            raw_matches=cs_prev.raw_count,
            filtered_matches=cs_prev.filtered_count,
            inliers=cs_prev.inlier_count,
            overlap=overlap,
            )

        if decision is FragmentDecision.APPEND:
            active.append(frame_id, to_keyframe)
            self.frame_to_fragment[frame_id] = active.id
            if cs_prev.valid:
                active.intra_edges.append(cs_prev)
            if cs_kf is not cs_prev and cs_kf.valid:
                active.intra_edges.append(cs_kf)
            self._inspect(active, frame_id)
        else:
            prev_global = self.initial_keyframe_poses[kf] @ l_prev
            if cs_prev.valid:
                initial = prev_global @ cs_prev.transform.inverse()
            else:
                initial = prev_global
            fragment = self._open_fragment(frame_id, keypoints, depth, initial)
            if cs_prev.valid:
                self.graph.add_odometry(kf, frame_id, l_prev @ cs_prev.transform.inverse())
            record.fragment_id = fragment.id
            record.keyframe_edges = len(self.register_keyframe(frame_id))

        self.records.append(record)
        self._prev = (frame_id, keypoints, depth)
        return record

    def last_inspected_at(self, fragment_id, frame_id):
        """Latest frame <= frame_id at which the fragment was observed (-1 if none)."""
        seen = [f for f in self.inspections.get(fragment_id, []) if f <= frame_id]
        return max(seen) if seen else -1

    def summary(self):
        root_component = self.graph.component_of(self.root)
        lone = [f.id for f in self.fragments if f.keyframe not in root_component]
        return {
            'frames': len(self.records),
            'fragments': len(self.fragments),
            'keyframe_edges': self.graph.graph.number_of_edges(),
            'lone_fragments': len(lone),
            'lone_at_creation': sum(f.lone_at_creation for f in self.fragments),
            'recovered_fragments': sum(f.lone_at_creation and f.keyframe in root_component for f in self.fragments),
            'disjoint_components': len(self.graph.disjoint_components(self.root)),
            'candidates': len(self.graph.candidates),
            }
