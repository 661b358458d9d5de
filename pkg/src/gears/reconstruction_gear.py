import warnings

import numpy as np

from src.criterions import CriterionManager
from src.datasets import DataManager
from src.datasets.modules.media_rw import write_match_rows
from src.fragments import FragmentBuilder, FragmentConfig
from src.fusion import (FusionGate, FusionScheduler, TsdfVolume, VolumeConfig,
                        extract_mesh, write_ply)
from src.matching import FilterConfig
from src.posegraph import OptimizerConfig, hierarchical_optimize, write_trajectory
from src.evaluation import write_report
from src.utils.misc import TimeMisc
from src.utils.progress_logger import MetricLogger, ValueMetric

from .modules.gear_base import GearBase, gear_register


@gear_register('reconstruction')
class ReconstructionGear(GearBase):
    """
    Sequence directory in; trajectory.txt, mesh.ply, connectivity.txt,
    correspondences.txt and report.txt out.
    """
    def __init__(self, cfg, loggers):
        super().__init__(cfg, loggers)
        self.data_manager = DataManager(cfg, loggers)
        self.data_module = self.data_manager.data_module
        self.k = self.data_module.k
        self.filter_cfg = FilterConfig.from_cfg(cfg)
        self.fragment_cfg = FragmentConfig.from_cfg(cfg)
        self.optimizer_cfg = OptimizerConfig.from_cfg(cfg)
        self.volume_cfg = VolumeConfig.from_cfg(cfg)
        self.gate = FusionGate.from_cfg(cfg)

    def _build_fragments(self, builder: FragmentBuilder):
        loader = self.data_manager.build_dataloader('frames')
        pbar = self.progress_bar(len(loader), desc='fragments')
        metric_logger = MetricLogger(self.cfg, self.loggers, pbar=pbar, header='Fragments')
        metric_logger.add_metrics([{
            'fragments': ValueMetric(format='{value:d}', final_format='{value:d}', high_prior=True),
            'filtered': ValueMetric(format='{value:.0f} ({avg:.1f})', final_format='{avg:.1f}'),
            'inliers': ValueMetric(format='{value:.0f} ({avg:.1f})', final_format='{avg:.1f}'),
            'overlap': ValueMetric(format='{value:.3f}', final_format='{avg:.3f}', low_prior=True),
            }])
        for bundle in metric_logger.log_every(loader):
            record = builder.process(bundle.frame_id, bundle.keypoints(self.k), bundle.depth)
            metric_logger.update_metrics(
                fragments=len(builder.fragments),
                filtered=record.filtered_matches,
                inliers=record.inliers,
                overlap=record.overlap,
                )
        metric_logger.output_dict(final_print=True)
        pbar.close()

    def _fuse(self, builder: FragmentBuilder, hierarchy):
        volume = TsdfVolume.from_config(self.volume_cfg)

        def load_frame(frame_id):
            bundle = self.data_module.load_frame(frame_id)
            return bundle.depth, bundle.image

        scheduler = FusionScheduler(self.gate, volume, self.k, load_frame, builder.last_inspected_at)
        main = [f for f in builder.fragments if f.keyframe in hierarchy.main_component]
        pbar = self.progress_bar(len(hierarchy.frame_poses), desc='fusion')
        scheduler.run(main, hierarchy.frame_poses, hierarchy.keyframe_poses, pbar=pbar)
        pbar.close()
        return scheduler

    def _consistency(self, frame_poses):
        criterion = CriterionManager(self.cfg, self.loggers).build_criterion()
        centers = criterion.triples(frame_poses)
        needed = sorted({f for t in centers for f in (t - 1, t, t + 1)})
        frames = {fid: self.data_module.load_frame(fid) for fid in needed}
        loss_dict, metrics_dict = criterion({'frame_poses': frame_poses}, {'frames': frames, 'k': self.k})
        return {**loss_dict, **metrics_dict}

    def _correspondence_rows(self, builder: FragmentBuilder):
        rows = []
        for cs in builder.consecutive:
            if not cs.valid:
                continue
            a, b = cs.pair
            for ka, kb in cs.matches.raw_indices(cs.kp_i, cs.kp_j):
                rows.append((a, b, ka, kb))
        return np.array(rows, dtype=np.int64).reshape(-1, 4)

    def _run(self):
        cfg = self.cfg
        with FragmentBuilder(self.k, self.filter_cfg, self.fragment_cfg, cfg.pipeline.registration_workers) as builder:
            self._build_fragments(builder)

        with TimeMisc.TimerContext('pose graph', file=self.log_file), warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            hierarchy = hierarchical_optimize(
                builder.fragments, builder.graph, self.optimizer_cfg,
                workers=cfg.pipeline.registration_workers,
                global_optimization=cfg.pipeline.global_optimization,
                )
        for w in caught:
            print(f'warning: {w.message}', file=self.log_file)

        with TimeMisc.TimerContext('fusion', file=self.log_file):
            scheduler = self._fuse(builder, hierarchy)
            mesh = extract_mesh(scheduler.volume)

        write_trajectory(self.out_path('trajectory.txt'), hierarchy.frame_poses)
        write_ply(self.out_path('mesh.ply'), mesh)
        builder.graph.export_edge_list(self.out_path('connectivity.txt'))
        write_match_rows(self.out_path('correspondences.txt'), self._correspondence_rows(builder))

        summary = builder.summary()
        report = {
            'frames': summary['frames'],
            'fragments': summary['fragments'],
            'keyframe_edges': summary['keyframe_edges'],
            'lone_fragments': summary['lone_fragments'],
            'lone_at_creation': summary['lone_at_creation'],
            'recovered_fragments': summary['recovered_fragments'],
            'disjoint_components': summary['disjoint_components'],
            'candidates': summary['candidates'],
            'posed_frames': len(hierarchy.frame_poses),
            'pruned_edges': len(hierarchy.pruned_edges),
            'flagged_bridges': len(hierarchy.flagged_bridges),
            'unreachable_keyframes': len(hierarchy.unreachable_keyframes),
            'initial_cost': hierarchy.initial_cost,
            'final_cost': hierarchy.final_cost,
            'fused_fragments': len(scheduler.fused_fragments),
            'mesh_vertices': len(mesh.vertices),
            'mesh_faces': len(mesh.faces),
            }
        if cfg.losses.score_consistency:
            report.update(self._consistency(hierarchy.frame_poses))
        write_report(self.out_path('report.txt'), report)
        return report
