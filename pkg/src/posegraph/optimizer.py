import warnings
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import scipy.linalg

from src.geometry import RigidPose
from src.utils.errors import InvalidInputError

from .graph import PoseGraph
from .residuals import edge_jacobians, edge_residuals

__all__ = [
    'OptimizerConfig',
    'OptimizationResult',
    'robust_weights',
    'graph_cost',
    'optimize',
    ]

MAX_DAMPING = 1e12
MIN_DAMPING = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 50
    convergence_tol: float = 1e-8
    damping_init: float = 1e-4
    prune_residual_factor: float = 3.0
    prune_rounds: int = 2
    huber_delta_cm: float = 0.1
    prune_min_residual_cm: float = 1e-3
    gradient_tol: float = 1e-10

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise InvalidInputError(f'posegraph.{name} must be positive, got {value}')

    @classmethod
    def from_cfg(cls, cfg):
        return cls(**vars(cfg.posegraph))


@dataclass
class OptimizationResult:
    poses: Dict[int, RigidPose]
    initial_cost: float
    final_cost: float
    iterations: int = 0
    gradient_norm: float = 0.0
    unreachable: List[int] = field(default_factory=list)
    stop_reason: str = ''

    @property
    def converged(self):
        return self.stop_reason in ('zero_cost', 'gradient', 'tolerance')


def robust_weights(norms, delta):
    """Huber IRLS weights min(1, delta / e)."""
    return np.minimum(1.0, delta / np.maximum(norms, 1e-300))


def _huber(norms, delta):
    return np.where(norms <= delta, norms ** 2, 2.0 * delta * norms - delta ** 2)


def _active_edges(graph: PoseGraph, vertices):
    return [e for e in graph.edges if e.i in vertices and e.j in vertices]


def graph_cost(graph: PoseGraph, poses=None, delta=None, edges=None):
    """Sum of edge costs; squared point residuals, Huber-robustified when delta is given."""
    poses = graph.poses if poses is None else poses
    total = 0.0
    for edge in graph.edges if edges is None else edges:
        norms = np.linalg.norm(edge_residuals(poses[edge.i], poses[edge.j], edge.transform, edge.points), axis=1)
        per_point = norms ** 2 if delta is None else _huber(norms, delta)
        total += edge.weight * float(per_point.sum())
    return total


def _normal_equations(edges, poses, index, delta):
    """H = J^T W J and b = J^T W r over the free vertices."""
    n = 6 * len(index)
    hessian = np.zeros((n, n))
    b = np.zeros(n)
    for edge in edges:
        r = edge_residuals(poses[edge.i], poses[edge.j], edge.transform, edge.points)
        w = edge.weight * robust_weights(np.linalg.norm(r, axis=1), delta)
        jac_i, jac_j = edge_jacobians(poses[edge.i], poses[edge.j], edge.points)
        blocks = [(index[v], jac) for v, jac in ((edge.i, jac_i), (edge.j, jac_j)) if v in index]
        for a, jac_a in blocks:
            sa = slice(6 * a, 6 * a + 6)
            b[sa] += np.einsum('n,nki,nk->i', w, jac_a, r)
            for c, jac_c in blocks:
                sc = slice(6 * c, 6 * c + 6)
                hessian[sa, sc] += np.einsum('n,nki,nkj->ij', w, jac_a, jac_c)
    return hessian, b


def _solve(hessian, b, damping):
    diag = np.diag(hessian)
    system = hessian + damping * np.diag(np.maximum(diag, 1e-12))
    try:
        return scipy.linalg.solve(system, -b, assume_a='pos')
    except (np.linalg.LinAlgError, ValueError):
        return scipy.linalg.lstsq(system, -b)[0]


def optimize(graph: PoseGraph, cfg: OptimizerConfig = OptimizerConfig()) -> OptimizationResult:
    """
    Levenberg-Marquardt over SE(3)^n with left retraction, minimizing the Huber-robustified
    sum of edge inconsistencies over the component of the fixed vertex. Vertices outside
    that component are reported in `unreachable` and keep their poses; their edges do not
    enter the cost.
    """
    reachable = graph.reachable()
    unreachable = sorted(set(graph.poses) - reachable)
    if unreachable:
        warnings.warn(f'{len(unreachable)} vertices are not connected to the fixed vertex {graph.fixed} and are left unchanged')

    edges = _active_edges(graph, reachable)
    free = sorted(v for v in reachable if v != graph.fixed)
    index = {v: k for k, v in enumerate(free)}
    poses = dict(graph.poses)
    delta = cfg.huber_delta_cm

    cost = graph_cost(graph, poses, delta, edges)
    result = OptimizationResult(poses=poses, initial_cost=cost, final_cost=cost, unreachable=unreachable)
    if not free or not edges:
        result.stop_reason = 'nothing_to_optimize'
        return result

    damping = cfg.damping_init
    for _ in range(cfg.max_iterations):
        if cost == 0.0:
            result.stop_reason = 'zero_cost'
            break
        hessian, b = _normal_equations(edges, poses, index, delta)
        if 2.0 * np.linalg.norm(b) < cfg.gradient_tol:
            result.stop_reason = 'gradient'
            break

        accepted = False
        while damping <= MAX_DAMPING:
            step = _solve(hessian, b, damping)
            candidate = dict(poses)
            for v, k in index.items():
                candidate[v] = poses[v].retract(step[6 * k:6 * k + 6])
            new_cost = graph_cost(graph, candidate, delta, edges)
            if new_cost <= cost:
                accepted = True
                break
            damping *= 10.0
        if not accepted:
            result.stop_reason = 'stalled'
            break

        result.iterations += 1
        decrease = cost - new_cost
        poses, cost = candidate, new_cost
        damping = max(damping / 10.0, MIN_DAMPING)
        if decrease <= cfg.convergence_tol * max(cost + decrease, np.finfo(float).tiny):
            result.stop_reason = 'tolerance'
            break
    else:
        result.stop_reason = 'max_iterations'

    _, b = _normal_equations(edges, poses, index, delta)
    result.poses = poses
    result.final_cost = cost
    result.gradient_norm = float(2.0 * np.linalg.norm(b))
    return result
