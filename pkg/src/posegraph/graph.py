from dataclasses import dataclass, field
from typing import Dict, List, Optional

import networkx as nx
import numpy as np

from src.geometry import RigidPose
from src.utils.errors import DimensionMismatchError, InvalidInputError

__all__ = [
    'PoseEdge',
    'PoseGraph',
    ]


@dataclass(eq=False)
class PoseEdge:
    """
    Relative transform T_ij (frame i -> frame j) with the correspondence points P_i
    expressed in frame i. `weight` scales the edge's cost (1 for every built edge).
    """
    i: int
    j: int
    transform: RigidPose
    points: np.ndarray
    weight: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DimensionMismatchError(f'edge {self.i}-{self.j}: points must be [N, 3], got {points.shape}')
        if len(points) == 0:
            raise InvalidInputError(f'edge {self.i}-{self.j}: empty correspondence point set')
        if self.i == self.j:
            raise InvalidInputError(f'self-loop edge on vertex {self.i}')
        self.points = points

    @property
    def match_count(self):
        return len(self.points)

    @property
    def key(self):
        return (self.i, self.j)

    @classmethod
    def from_correspondences(cls, cs):
        """Edge from a validated CorrespondenceSet, keeping its inlier points in frame i."""
        assert cs.valid, f'correspondence set {cs.pair} is not valid'
        points_i, _ = cs.inlier_points()
        i, j = cs.pair
        return cls(i, j, cs.transform, points_i, diagnostics={'inliers': cs.inlier_count, 'raw_matches': cs.raw_count})


class PoseGraph:
    """
    Vertices carry pose estimates T_i (camera -> world, or member -> keyframe in an
    intra-fragment graph); edges carry T_ij measurements. `fixed` is the gauge vertex.
    """
    def __init__(self, poses: Optional[Dict[int, RigidPose]] = None, edges: Optional[List[PoseEdge]] = None, fixed=None):
        self.poses: Dict[int, RigidPose] = dict(poses or {})
        self.edges: List[PoseEdge] = []
        self.fixed = fixed
        for edge in edges or []:
            self.add_edge(edge)

    def add_vertex(self, vertex, pose: RigidPose):
        self.poses[vertex] = pose

    def add_edge(self, edge: PoseEdge):
        for v in edge.key:
            if v not in self.poses:
                raise InvalidInputError(f'edge {edge.i}-{edge.j} references unknown vertex {v}')
        self.edges.append(edge)

    def remove_edge(self, edge: PoseEdge):
        self.edges = [e for e in self.edges if e is not edge]

    @property
    def vertices(self):
        return sorted(self.poses)

    def copy(self, poses=None):
        g = PoseGraph(poses if poses is not None else self.poses, fixed=self.fixed)
        g.edges = list(self.edges)
        return g

    def to_networkx(self):
        """Simple graph view; parallel measurements are counted in the `multiplicity` attribute."""
        g = nx.Graph()
        g.add_nodes_from(self.poses)
        for edge in self.edges:
            if g.has_edge(*edge.key):
                g.edges[edge.key]['multiplicity'] += 1
            else:
                g.add_edge(*edge.key, multiplicity=1)
        return g

    def reachable(self):
        if self.fixed not in self.poses:
            raise InvalidInputError(f'fixed vertex {self.fixed} is not in the graph')
        return set(nx.node_connected_component(self.to_networkx(), self.fixed))

    def unreachable(self):
        return sorted(set(self.poses) - self.reachable())

    def bridges(self):
        """Edges whose removal disconnects their endpoints."""
        g = self.to_networkx()
        cut = {frozenset(e) for e in nx.bridges(g) if g.edges[e]['multiplicity'] == 1}
        return [edge for edge in self.edges if frozenset(edge.key) in cut]

    def __len__(self):
        return len(self.poses)

    def __repr__(self):
        return f'PoseGraph(vertices={len(self.poses)}, edges={len(self.edges)}, fixed={self.fixed})'
