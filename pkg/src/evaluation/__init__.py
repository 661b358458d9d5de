from .correspondence import (GtFrame, PrecisionRecall, correspondence_pr,
                             group_matches, gt_correspondences)
from .depth import DepthMetrics, depth_metrics, mean_depth_metrics
from .report import (ATE_TABLE_COLUMNS, DEPTH_TABLE_COLUMNS,
                     MATCHING_TABLE_COLUMNS, read_report, report_table,
                     write_report, write_table)
from .trajectory import (ALIGNMENT_MODES, AteReport, ate, loop_closure_gap,
                         nearest_pose_distance, umeyama_alignment)
