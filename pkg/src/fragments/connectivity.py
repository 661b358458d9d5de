import networkx as nx

from src.utils.misc import IoMisc

__all__ = [
    'ConnectivityGraph',
    ]


class ConnectivityGraph:
    """
    Keyframes as nodes, validated keyframe-pair transforms as edges.
    Keyframes without edges are candidates (lost tracking) and stay in the graph.
    Edges are only ever added.
    """
    def __init__(self):
        self.graph = nx.Graph()
        # temporal neighbours between consecutive keyframes, kept apart from the registration edges
        self.odometry = nx.Graph()

    def add_keyframe(self, kf):
        self.graph.add_node(kf)
        self.odometry.add_node(kf)

    def add_edge(self, cs):
        """cs: valid CorrespondenceSet with pair (kf_a, kf_b) and T_ab."""
        a, b = cs.pair
        assert cs.valid, f'refusing invalid edge {a}-{b}'
        self.graph.add_edge(a, b, cs=cs, weight=cs.inlier_count)

    def add_odometry(self, kf_a, kf_b, transform):
        """transform maps kf_b coordinates into kf_a coordinates."""
        self.odometry.add_edge(kf_a, kf_b, transform=transform, src=kf_b, dst=kf_a)

    @property
    def keyframes(self):
        return sorted(self.graph.nodes)

    @property
    def candidates(self):
        return sorted(n for n in self.graph.nodes if self.graph.degree(n) == 0)

    def edge_list(self):
        return sorted(tuple(sorted(e)) for e in self.graph.edges)

    def edge(self, a, b):
        """CorrespondenceSet oriented as (a, b)."""
        cs = self.graph.edges[a, b]['cs']
        return cs if cs.pair == (a, b) else cs.reversed()

    def components(self):
        return sorted((sorted(c) for c in nx.connected_components(self.graph)), key=lambda c: c[0])

    def component_of(self, kf):
        return set(nx.node_connected_component(self.graph, kf))

    def lone_keyframes(self, root):
        return sorted(set(self.graph.nodes) - self.component_of(root))

    def disjoint_components(self, root):
        """Components of several keyframes that do not contain the root."""
        return [c for c in self.components() if root not in c and len(c) > 1]

    def export_edge_list(self, path):
        with IoMisc.atomic_write(path) as f:
            for a, b in self.edge_list():
                f.write(f'{a} {b}\n')
