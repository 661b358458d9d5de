from pathlib import Path

from src.datasets import DataManager
from src.datasets.modules.media_rw import frame_path, load_raster, read_match_rows
from src.evaluation import (ATE_TABLE_COLUMNS, DEPTH_TABLE_COLUMNS,
                            MATCHING_TABLE_COLUMNS, GtFrame, ate,
                            correspondence_pr, depth_metrics, group_matches,
                            loop_closure_gap, mean_depth_metrics,
                            report_table, write_report, write_table)
from src.geometry import DepthRaster
from src.posegraph import read_trajectory
from src.utils.errors import ConfigError, MissingGroundTruthError
from src.utils.progress_logger import MetricLogger, ValueMetric

from .modules.gear_base import GearBase, gear_register

EVAL_CHOICES = ('depth', 'ate', 'matching')


@gear_register('evaluation')
class EvaluationGear(GearBase):
    """
    Compares predicted artifacts in eval.pred_dir against the ground truth of the
    sequence directory data.sequence_dir. Writes eval_<which>.tsv and report.txt.
    """
    def __init__(self, cfg, loggers):
        super().__init__(cfg, loggers)
        self.which = cfg.eval.which
        if self.which not in EVAL_CHOICES:
            raise ConfigError(f'eval.which must be one of {EVAL_CHOICES}, got {self.which!r}')
        if cfg.eval.pred_dir is None:
            raise ConfigError('no prediction directory given')
        self.pred_dir = Path(cfg.eval.pred_dir)
        self.data_manager = DataManager(cfg, loggers)
        self.data_module = self.data_manager.data_module
        self.k = self.data_module.k

    def _eval_depth(self):
        loader = self.data_manager.build_dataloader('gt')
        pbar = self.progress_bar(len(loader), desc='depth')
        metric_logger = MetricLogger(self.cfg, self.loggers, pbar=pbar, header='Depth')
        metric_logger.add_metrics([{'abs_rel': ValueMetric(high_prior=True)}, 'rmse'])
        per_frame = []
        for sample in metric_logger.log_every(loader):
            path = frame_path(self.pred_dir, sample['frame_id'], 'depth')
            pred = DepthRaster(load_raster(path, self.k.height, self.k.width))
            metrics = depth_metrics(pred, sample['depth'], median_scaling=self.cfg.eval.median_scaling)
            metric_logger.update_metrics(abs_rel=metrics.abs_rel, rmse=metrics.rmse)
            per_frame.append(metrics)
        metric_logger.output_dict(final_print=True)
        pbar.close()
        mean = mean_depth_metrics(per_frame)
        return [{'frames': len(per_frame), **mean.as_dict()}], DEPTH_TABLE_COLUMNS

    def _eval_ate(self):
        pred = read_trajectory(self.pred_dir / 'trajectory.txt')
        gt = self.data_module.gt_poses()
        report = ate(pred, gt, mode=self.cfg.eval.ate_mode)
        row = report.as_dict()
        if self.cfg.eval.turn_frame is not None:
            row['loop_gap'] = loop_closure_gap(pred, self.cfg.eval.turn_frame)
        columns = ATE_TABLE_COLUMNS + [c for c in ('mean', 'scale', 'frames', 'loop_gap') if c in row]
        return [row], columns

    def _eval_matching(self):
        pred_path = self.pred_dir / 'correspondences.txt'
        pred = group_matches(read_match_rows(pred_path))
        gt_poses = self.data_module.gt_poses()
        needed = sorted({f for pair in pred for f in pair})
        dataset = self.data_module.get_dataset('gt')
        frames = {}
        for frame_id in needed:
            if frame_id not in gt_poses:
                raise MissingGroundTruthError(f'no ground-truth pose for frame {frame_id}')
            sample = dataset[frame_id]
            frames[frame_id] = GtFrame(sample['uv'], sample['depth'], gt_poses[frame_id])
        pr = correspondence_pr(
            pred, frames, self.k,
            tol_fraction=self.cfg.eval.tol_fraction,
            occlusion_tol=self.cfg.eval.occlusion_tol,
            )
        row = pr.as_dict()
        if (self.data_module.gt_dir / 'matches.txt').is_file():
            generator = group_matches(self.data_module.gt_match_rows())
            hits = sum(len(m & generator.get(pair, set())) for pair, m in pred.items())
            row['generator_precision'] = hits / pr.predicted if pr.predicted else None
        columns = MATCHING_TABLE_COLUMNS + [c for c in ('true_positives', 'predicted', 'ground_truth', 'generator_precision') if c in row]
        return [row], columns

    def _run(self):
        rows, columns = getattr(self, f'_eval_{self.which}')()
        table = report_table(rows, columns)
        write_table(self.out_path(f'eval_{self.which}.tsv'), table)
        print(table.to_csv(sep='\t', index=False, float_format='%.9g', na_rep='undefined'), end='')
        report = {'which': self.which, **{c: rows[0].get(c) for c in columns}}
        write_report(self.out_path('report.txt'), report)
        return report
