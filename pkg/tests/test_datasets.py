import shutil

import numpy as np
import pytest

from src.datasets import DataManager, FrameBundle
from src.datasets.modules.media_rw import (frame_path, load_features,
                                           read_intrinsics, read_match_rows,
                                           save_features)
from src.datasets.sequence_dataset import SequenceDataModule
from src.utils.errors import MalformedSequenceError, MissingGroundTruthError

from conftest import load_cfg


def _cfg(sequence_dir, tmp_path):
    return load_cfg(
        'configs/templates/run.yaml',
        [str(sequence_dir), '--out', str(tmp_path / 'out')],
        [('sequence_dir', 'data.sequence_dir')],
        )


@pytest.fixture
def sequence_copy(clean_sequence, tmp_path):
    target = tmp_path / 'sequence'
    shutil.copytree(clean_sequence, target)
    return target


class TestSequenceDataModule:
    def test_frames(self, clean_sequence, clean_spec, tmp_path):
        module = DataManager(_cfg(clean_sequence, tmp_path), loggers=None).data_module
        assert isinstance(module, SequenceDataModule)
        assert module.frame_ids == list(range(clean_spec.frames))
        assert module.k == clean_spec.intrinsics

        frame = module.load_frame(3)
        assert isinstance(frame, FrameBundle)
        assert frame.image.values.shape == clean_spec.intrinsics.shape + (3,)
        assert frame.specular is None
        kp = frame.keypoints(module.k)
        assert 0 < len(kp) <= frame.keypoint_count

    def test_dataloader_yields_frames_in_order(self, clean_sequence, tmp_path):
        manager = DataManager(_cfg(clean_sequence, tmp_path), loggers=None)
        ids = [frame.frame_id for frame in manager.build_dataloader('frames')]
        assert ids == manager.data_module.frame_ids

    def test_ground_truth(self, clean_sequence, clean_spec, tmp_path):
        module = SequenceDataModule(_cfg(clean_sequence, tmp_path))
        assert sorted(module.gt_poses()) == list(range(clean_spec.frames))
        assert module.gt_match_rows().shape[1] == 4
        sample = module.get_dataset('gt')[0]
        assert sample['frame_id'] == 0
        assert sample['depth'].values.shape == clean_spec.intrinsics.shape

    def test_specular_masks_on_request(self, clean_sequence, tmp_path):
        cfg = _cfg(clean_sequence, tmp_path)
        cfg.data.specular_masking = True
        frame = SequenceDataModule(cfg).load_frame(0)
        assert frame.specular.shape == frame.depth.values.shape
        assert frame.specular.dtype == bool

    def test_missing_ground_truth(self, sequence_copy, tmp_path):
        shutil.rmtree(sequence_copy / 'gt')
        module = SequenceDataModule(_cfg(sequence_copy, tmp_path))
        with pytest.raises(MissingGroundTruthError):
            module.gt_poses()
        with pytest.raises(MissingGroundTruthError):
            module.get_dataset('gt')[0]


class TestMalformedSequences:
    def test_empty_directory(self, tmp_path):
        (tmp_path / 'empty').mkdir()
        with pytest.raises(MalformedSequenceError, match='intrinsics.txt'):
            SequenceDataModule(_cfg(tmp_path / 'empty', tmp_path))

    def test_truncated_depth(self, sequence_copy, tmp_path):
        path = frame_path(sequence_copy, 5, 'depth')
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(MalformedSequenceError, match='000005.depth'):
            SequenceDataModule(_cfg(sequence_copy, tmp_path))

    def test_missing_feature_file(self, sequence_copy, tmp_path):
        frame_path(sequence_copy, 7, 'feat').unlink()
        with pytest.raises(MalformedSequenceError, match='000007.feat'):
            SequenceDataModule(_cfg(sequence_copy, tmp_path))

    def test_gap_in_frame_ids(self, sequence_copy, tmp_path):
        for suffix in ('rgb', 'depth', 'feat'):
            frame_path(sequence_copy, 10, suffix).unlink()
        with pytest.raises(MalformedSequenceError, match='000010.rgb'):
            SequenceDataModule(_cfg(sequence_copy, tmp_path))

    def test_stray_file(self, sequence_copy, tmp_path):
        (sequence_copy / 'frames' / 'notes.txt').write_text('hi\n')
        with pytest.raises(MalformedSequenceError, match='notes.txt'):
            SequenceDataModule(_cfg(sequence_copy, tmp_path))

    def test_bad_intrinsics(self, sequence_copy, tmp_path):
        (sequence_copy / 'intrinsics.txt').write_text('53.3 53.3 63.5\n')
        with pytest.raises(MalformedSequenceError, match='intrinsics.txt'):
            read_intrinsics(sequence_copy)


class TestMediaFiles:
    def test_features(self, rng, tmp_path):
        uv = rng.uniform(0.0, 100.0, (7, 2))
        descriptors = rng.standard_normal((7, 128))
        save_features(tmp_path / 'x.feat', uv, descriptors)
        assert (tmp_path / 'x.feat').stat().st_size == 4 + 7 * 130 * 4
        back_uv, back_desc = load_features(tmp_path / 'x.feat')
        np.testing.assert_allclose(back_uv, uv, rtol=1e-6)
        np.testing.assert_allclose(back_desc, descriptors, rtol=1e-6, atol=1e-6)

    def test_truncated_features(self, rng, tmp_path):
        save_features(tmp_path / 'x.feat', rng.random((3, 2)), rng.random((3, 128)))
        raw = (tmp_path / 'x.feat').read_bytes()
        (tmp_path / 'x.feat').write_bytes(raw[:-8])
        with pytest.raises(MalformedSequenceError, match='x.feat'):
            load_features(tmp_path / 'x.feat')

    def test_bad_match_row(self, tmp_path):
        (tmp_path / 'matches.txt').write_text('0 1 2 3\n0 1 -2 3\n')
        with pytest.raises(MalformedSequenceError, match='line 2'):
            read_match_rows(tmp_path / 'matches.txt')
