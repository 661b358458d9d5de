import warnings

import numpy as np

from src.geometry import reproject_depth_pair, warp_view
from src.utils.errors import InvalidInputError

from .modules.criterion_base import CriterionBase, criterion_register
from .modules.losses import (consistency_pairs, depth_consistency_loss,
                             extra_photometric_loss, min_photometric_loss,
                             total_loss)


@criterion_register('frame_consistency')
class FrameConsistencyCriterion(CriterionBase):
    """
    Photometric and depth consistency of an estimated trajectory, scored on frame
    triples (t - 1, t, t + 1) every `losses.eval_stride` frames.

    outputs: {'frame_poses': {frame_id: RigidPose}}
    targets: {'frames': {frame_id: FrameBundle}, 'k': Intrinsics}
    """
    def __init__(self, cfg):
        super().__init__(cfg)
        self.eval_stride = cfg.losses.eval_stride
        self.ssim_window = cfg.losses.ssim_window
        self.dc_percentile = cfg.losses.dc_percentile
        if self.eval_stride < 1:
            raise InvalidInputError(f'losses.eval_stride must be >= 1, got {self.eval_stride}')

    def triples(self, frame_ids):
        """Centers t with t - 1 and t + 1 also present, every eval_stride frames."""
        present = set(frame_ids)
        centers = [t for t in sorted(present) if t - 1 in present and t + 1 in present]
        return centers[::self.eval_stride]

    def _valid_mask(self, frame, warp_valid):
        return warp_valid if frame.specular is None else warp_valid & ~frame.specular

    def _warp(self, frames, poses, src, tgt, k):
        t_rel = poses[tgt].inverse() @ poses[src]
        image, valid = warp_view(frames[src].image, frames[src].depth, t_rel, k)
        return image, self._valid_mask(frames[tgt], valid), t_rel

    def score_triple(self, t, frames, poses, k):
        w, window = self.weights, self.ssim_window
        warps = []
        for s in (t - 1, t + 1):
            image, mask, _ = self._warp(frames, poses, s, t, k)
            warps.append((image, mask))
        l_ph = min_photometric_loss(
            frames[t].image, warps, w=w, window=window,
            sources=[frames[t - 1].image, frames[t + 1].image],
            )

        extra_pairs, dc_terms, dc_failed = [], [], 0
        for i, j in consistency_pairs(t):
            image, mask, t_rel = self._warp(frames, poses, j, i, k)
            extra_pairs.append((frames[i].image, image, mask))
            d_warped, d_interp = reproject_depth_pair(frames[j].depth, frames[i].depth, t_rel, k)
            try:
                dc_terms.append(depth_consistency_loss(d_warped, d_interp, self.dc_percentile))
            except InvalidInputError:
                dc_failed += 1
        l_extra = extra_photometric_loss(extra_pairs, w, window)
        # None: no pair of this triple overlapped in depth
        l_dc = float(np.mean(dc_terms)) if dc_terms else None
        return {
            'loss_ph': l_ph,
            'loss_ph_extra': l_extra,
            'loss_dc': l_dc,
            'loss_total': None if l_dc is None else total_loss(l_ph, l_extra, l_dc, w),
            'dc_pairs': len(dc_terms) + dc_failed,
            'dc_failed_pairs': dc_failed,
            }

    def _get_iter_loss_and_metrics(self, outputs, targets):
        poses = outputs['frame_poses']
        frames, k = targets['frames'], targets['k']
        centers = self.triples([fid for fid in frames if fid in poses])
        if not centers:
            warnings.warn('frame_consistency: no frame triple with estimated poses; losses are undefined.')
            return {}, {'scored_triples': 0}

        per_triple = [self.score_triple(t, frames, poses, k) for t in centers]
        loss_dict = {key: float(np.mean([row[key] for row in per_triple])) for key in ('loss_ph', 'loss_ph_extra')}
        dc_values = [row['loss_dc'] for row in per_triple if row['loss_dc'] is not None]
        if dc_values:
            loss_dict['loss_dc'] = float(np.mean(dc_values))
            loss_dict['loss_total'] = total_loss(loss_dict['loss_ph'], loss_dict['loss_ph_extra'], loss_dict['loss_dc'], self.weights)
        else:
            warnings.warn('frame_consistency: no depth pair overlapped; loss_dc and loss_total are undefined.')
            loss_dict['loss_dc'] = loss_dict['loss_total'] = None
        metrics = {
            'scored_triples': len(centers),
            'dc_pairs': sum(row['dc_pairs'] for row in per_triple),
            'dc_failed_pairs': sum(row['dc_failed_pairs'] for row in per_triple),
            }
        return loss_dict, metrics
