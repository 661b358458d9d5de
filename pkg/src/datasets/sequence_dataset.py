from pathlib import Path

from torch.utils.data import Dataset

from src.criterions.modules.losses import specular_mask
from src.geometry import DepthRaster, ImageRaster, Intrinsics
from src.posegraph import read_trajectory
from src.utils.errors import InvalidInputError, MalformedSequenceError, MissingGroundTruthError

from .modules.data_module_base import DataModuleBase, data_module_register
from .modules.frame_bundle import FrameBundle
from .modules.media_rw import (check_frame_files, frame_path, gt_depth_path,
                               list_frame_ids, load_features, load_raster,
                               read_intrinsics, read_match_rows)


class SequenceFrames(Dataset):
    def __init__(self, sequence_dir, k: Intrinsics, frame_ids, specular_masking=False, specular_threshold=0.9, specular_kernel=13):
        super().__init__()
        self.sequence_dir = Path(sequence_dir)
        self.k = k
        self.frame_ids = list(frame_ids)
        self.specular_masking = specular_masking
        self.specular_threshold = specular_threshold
        self.specular_kernel = specular_kernel

    def load(self, frame_id) -> FrameBundle:
        k = self.k
        rgb_path = frame_path(self.sequence_dir, frame_id, 'rgb')
        depth_path = frame_path(self.sequence_dir, frame_id, 'depth')
        try:
            image = ImageRaster(load_raster(rgb_path, k.height, k.width, 3))
        except InvalidInputError as e:
            raise MalformedSequenceError(rgb_path, str(e)) from e
        try:
            depth = DepthRaster(load_raster(depth_path, k.height, k.width))
        except InvalidInputError as e:
            raise MalformedSequenceError(depth_path, str(e)) from e
        uv, descriptors = load_features(frame_path(self.sequence_dir, frame_id, 'feat'))
        specular = specular_mask(image, self.specular_threshold, self.specular_kernel) if self.specular_masking else None
        return FrameBundle(frame_id, image, depth, uv, descriptors, specular)

    def __getitem__(self, idx) -> FrameBundle:
        return self.load(self.frame_ids[idx])

    def __len__(self):
        return len(self.frame_ids)


class SequenceGroundTruth(Dataset):
    """Ground-truth depth under gt/depth/ with the raw keypoint pixels of every frame."""
    def __init__(self, sequence_dir, k: Intrinsics, frame_ids):
        super().__init__()
        self.sequence_dir = Path(sequence_dir)
        self.k = k
        self.frame_ids = list(frame_ids)

    def __getitem__(self, idx):
        frame_id = self.frame_ids[idx]
        path = gt_depth_path(self.sequence_dir, frame_id)
        if not path.is_file():
            raise MissingGroundTruthError(f'{path}: missing ground-truth depth')
        uv, _ = load_features(frame_path(self.sequence_dir, frame_id, 'feat'))
        return {
            'frame_id': frame_id,
            'depth': DepthRaster(load_raster(path, self.k.height, self.k.width)),
            'uv': uv,
            }

    def __len__(self):
        return len(self.frame_ids)


@data_module_register('sequence_dir')
class SequenceDataModule(DataModuleBase):
    """
    A sequence directory: intrinsics.txt, frames/NNNNNN.{rgb,depth,feat} and optional
    gt/{poses.txt,matches.txt,depth/}. The layout is checked up front so a malformed
    directory fails before any work, naming the first offending file.
    """
    splits = ('frames', 'gt')

    def __init__(self, cfg):
        super().__init__(cfg)
        self.sequence_dir = Path(cfg.data.sequence_dir)
        self.k = read_intrinsics(self.sequence_dir)
        self.frame_ids = list_frame_ids(self.sequence_dir)
        for frame_id in self.frame_ids:
            check_frame_files(self.sequence_dir, frame_id, self.k)

    def build_dataset(self, split):
        if split == 'frames':
            return SequenceFrames(
                self.sequence_dir, self.k, self.frame_ids,
                specular_masking=self.cfg.data.specular_masking,
                specular_threshold=self.cfg.losses.specular_threshold,
                specular_kernel=self.cfg.losses.specular_kernel,
                )
        return SequenceGroundTruth(self.sequence_dir, self.k, self.frame_ids)

    def load_frame(self, frame_id) -> FrameBundle:
        return self.get_dataset('frames').load(frame_id)

    @property
    def gt_dir(self):
        return self.sequence_dir / 'gt'

    def gt_poses(self):
        path = self.gt_dir / 'poses.txt'
        if not path.is_file():
            raise MissingGroundTruthError(f'{path}: missing ground-truth poses')
        return read_trajectory(path)

    def gt_match_rows(self):
        path = self.gt_dir / 'matches.txt'
        if not path.is_file():
            raise MissingGroundTruthError(f'{path}: missing ground-truth matches')
        return read_match_rows(path)
