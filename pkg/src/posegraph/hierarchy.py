from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import networkx as nx

from src.fragments import ConnectivityGraph, Fragment
from src.geometry import RigidPose

from .graph import PoseEdge, PoseGraph
from .optimizer import OptimizationResult, OptimizerConfig, optimize
from .pruning import PruneReport, prune_edges

__all__ = [
    'StageResult',
    'HierarchyResult',
    'intra_fragment_graph',
    'inter_fragment_graph',
    'spanning_tree_poses',
    'odometry_poses',
    'optimize_stage',
    'hierarchical_optimize',
    ]


@dataclass
class StageResult:
    graph: PoseGraph
    optimization: OptimizationResult
    pruning: Optional[PruneReport] = None

    @property
    def poses(self):
        return self.graph.poses

    @property
    def final_cost(self):
        if self.pruning is not None and self.pruning.result is not None:
            return self.pruning.result.final_cost
        return self.optimization.final_cost

    @property
    def pruned_edges(self):
        return [] if self.pruning is None else self.pruning.pruned

    @property
    def flagged_bridges(self):
        return [] if self.pruning is None else self.pruning.flagged_bridges


@dataclass
class HierarchyResult:
    frame_poses: Dict[int, RigidPose]
    keyframe_poses: Dict[int, RigidPose]
    local_poses: Dict[int, Dict[int, RigidPose]]
    main_component: set
    intra: Dict[int, StageResult] = field(default_factory=dict)
    inter: Optional[StageResult] = None
    unreachable_keyframes: List[int] = field(default_factory=list)

    @property
    def initial_cost(self):
        return self.inter.optimization.initial_cost if self.inter is not None else 0.0

    @property
    def final_cost(self):
        return self.inter.final_cost if self.inter is not None else 0.0

    @property
    def pruned_edges(self):
        edges = [] if self.inter is None else list(self.inter.pruned_edges)
        for stage in self.intra.values():
            edges.extend(stage.pruned_edges)
        return edges

    @property
    def flagged_bridges(self):
        edges = [] if self.inter is None else list(self.inter.flagged_bridges)
        for stage in self.intra.values():
            edges.extend(stage.flagged_bridges)
        return edges


def intra_fragment_graph(fragment: Fragment) -> PoseGraph:
    """Members with their keyframe-local poses, keyframe fixed at identity."""
    graph = PoseGraph(fragment.local_poses, fixed=fragment.keyframe)
    for cs in fragment.intra_edges:
        graph.add_edge(PoseEdge.from_correspondences(cs))
    return graph


def spanning_tree_poses(connectivity: ConnectivityGraph, root) -> Dict[int, RigidPose]:
    """
    Initial keyframe poses chained from the root along a maximum spanning tree of the
    keyframe graph (edge weight = inlier count). Only the root component is covered.
    """
    component = connectivity.graph.subgraph(connectivity.component_of(root))
    tree = nx.maximum_spanning_tree(component, weight='weight')
    poses = {root: RigidPose.identity()}
    for a, b in nx.bfs_edges(tree, root):
        # T_ab maps a into b: G_a p_a = G_b T_ab p_a
        poses[b] = poses[a] @ connectivity.edge(a, b).transform.inverse()
    return poses


def odometry_poses(connectivity: ConnectivityGraph, root) -> Dict[int, RigidPose]:
    """Keyframe poses chained along temporal odometry links only."""
    poses = {root: RigidPose.identity()}
    odometry = connectivity.odometry
    for a, b in nx.bfs_edges(odometry, root):
        data = odometry.edges[a, b]
        # the stored transform maps src into dst
        transform = data['transform'] if data['dst'] == a else data['transform'].inverse()
        poses[b] = poses[a] @ transform
    return poses


def inter_fragment_graph(connectivity: ConnectivityGraph, root, initial: Dict[int, RigidPose]) -> PoseGraph:
    """Keyframes of the root component with one edge per validated keyframe pair."""
    graph = PoseGraph(initial, fixed=root)
    for a, b in connectivity.edge_list():
        if a in initial and b in initial:
            graph.add_edge(PoseEdge.from_correspondences(connectivity.edge(a, b)))
    return graph


def optimize_stage(graph: PoseGraph, cfg: OptimizerConfig) -> StageResult:
    """One optimization pass, then pruning rounds (each followed by re-optimization)."""
    optimization = optimize(graph, cfg)
    optimized = graph.copy(optimization.poses)
    pruning = prune_edges(optimized, cfg)
    return StageResult(pruning.graph, optimization, pruning)


def hierarchical_optimize(fragments: List[Fragment], connectivity: ConnectivityGraph, cfg: OptimizerConfig = OptimizerConfig(),
                          workers=1, global_optimization=True) -> HierarchyResult:
    """
    Intra-fragment optimization of every fragment (keyframe fixed, run in a thread pool),
    then inter-fragment optimization over the keyframes of the first fragment's component
    (first keyframe fixed). A frame's global pose is its keyframe's global pose composed
    with its optimized local pose.

    With global_optimization off, keyframe poses are chained along temporal odometry and
    the inter stage is skipped.
    """
    assert fragments, 'no fragments to optimize'
    root = fragments[0].keyframe

    def run_intra(fragment):
        if len(fragment) == 1:
            return None
        return optimize_stage(intra_fragment_graph(fragment), cfg)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        intra_results = list(executor.map(run_intra, fragments))

    intra = {}
    local_poses = {}
    for fragment, stage in zip(fragments, intra_results):
        if stage is None:
            local_poses[fragment.id] = dict(fragment.local_poses)
            continue
        intra[fragment.id] = stage
        local_poses[fragment.id] = dict(stage.poses)

    inter = None
    if global_optimization:
        keyframe_poses = spanning_tree_poses(connectivity, root)
        inter = optimize_stage(inter_fragment_graph(connectivity, root, keyframe_poses), cfg)
        keyframe_poses = dict(inter.poses)
    else:
        keyframe_poses = odometry_poses(connectivity, root)
    main_component = set(keyframe_poses)
    unreachable = sorted(set(connectivity.keyframes) - main_component)

    frame_poses = {}
    for fragment in fragments:
        if fragment.keyframe not in main_component:
            continue
        anchor = keyframe_poses[fragment.keyframe]
        for frame_id, local in local_poses[fragment.id].items():
            frame_poses[frame_id] = anchor @ local
    frame_poses = dict(sorted(frame_poses.items()))

    return HierarchyResult(
        frame_poses=frame_poses,
        keyframe_poses=keyframe_poses,
        local_poses=local_poses,
        main_component=main_component,
        intra=intra,
        inter=inter,
        unreachable_keyframes=unreachable,
        )
