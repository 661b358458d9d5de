import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .graph import PoseEdge, PoseGraph
from .optimizer import OptimizationResult, OptimizerConfig, optimize
from .residuals import edge_residuals

__all__ = [
    'PruneReport',
    'edge_mean_residuals',
    'prune_edges',
    ]


@dataclass
class PruneReport:
    graph: PoseGraph
    pruned: List[PoseEdge] = field(default_factory=list)
    flagged_bridges: List[PoseEdge] = field(default_factory=list)
    rounds: int = 0
    result: Optional[OptimizationResult] = None


def edge_mean_residuals(graph: PoseGraph, edges=None):
    """Mean per-point residual norm (cm) of each edge at the graph's current poses."""
    edges = graph.edges if edges is None else edges
    return np.array([
        np.linalg.norm(edge_residuals(graph.poses[e.i], graph.poses[e.j], e.transform, e.points), axis=1).mean()
        for e in edges
        ])


def _worst_removable(g: PoseGraph, edges, means, threshold, flagged):
    """Worst edge above threshold that is not a bridge; bridges met on the way are flagged."""
    bridges = None
    for k in np.argsort(-means, kind='stable'):
        if means[k] <= threshold:
            return None
        bridges = g.bridges() if bridges is None else bridges
        if any(edges[k] is b for b in bridges):
            flagged[id(edges[k])] = edges[k]
            continue
        return edges[k]
    return None


def prune_edges(graph: PoseGraph, cfg: OptimizerConfig = OptimizerConfig()) -> PruneReport:
    """
    Remove edges whose mean residual exceeds max(prune_residual_factor x median, prune_min_residual_cm)
    at the current (already optimized) poses. Each round fixes the threshold from the median
    at its start, then removes the worst offending edge and re-optimizes, one edge at a time,
    until no edge exceeds it. Bridges are never removed; they are flagged instead.
    The input graph is left untouched.
    """
    report = PruneReport(graph=graph.copy())
    reachable = report.graph.reachable()
    flagged = {}
    for _ in range(cfg.prune_rounds):
        g = report.graph
        edges = [e for e in g.edges if e.i in reachable and e.j in reachable]
        if not edges:
            break
        threshold = max(cfg.prune_residual_factor * float(np.median(edge_mean_residuals(g, edges))), cfg.prune_min_residual_cm)
        removed = 0
        while edges:
            edge = _worst_removable(g, edges, edge_mean_residuals(g, edges), threshold, flagged)
            if edge is None:
                break
            g.remove_edge(edge)
            report.pruned.append(edge)
            removed += 1
            report.result = optimize(g, cfg)
            g.poses = report.result.poses
            edges = [e for e in edges if e is not edge]
        report.rounds += 1
        if not removed:
            break

    report.flagged_bridges = list(flagged.values())
    for edge in report.flagged_bridges:
        edge.diagnostics['flagged_bridge'] = True
    if report.flagged_bridges:
        warnings.warn(f'kept {len(report.flagged_bridges)} high-residual bridge edges: {[e.key for e in report.flagged_bridges]}')
    return report
