from .graph import PoseEdge, PoseGraph
from .hierarchy import (HierarchyResult, StageResult, hierarchical_optimize,
                        inter_fragment_graph, intra_fragment_graph,
                        odometry_poses, optimize_stage, spanning_tree_poses)
from .optimizer import (OptimizationResult, OptimizerConfig, graph_cost,
                        optimize, robust_weights)
from .pruning import PruneReport, edge_mean_residuals, prune_edges
from .residuals import (batch_hat, edge_inconsistency, edge_jacobians,
                        edge_residuals)
from .trajectory import read_trajectory, trajectory_positions, write_trajectory
