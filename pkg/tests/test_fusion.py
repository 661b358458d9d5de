import numpy as np
import pytest

from src.fragments import Fragment
from src.fusion import (FragmentState, FusionEvent, FusionGate,
                        FusionScheduler, Mesh, TsdfVolume, VolumeConfig,
                        extract_mesh, fill_from_sdf, fusion_scheduler,
                        integrate_frame, read_ply, write_ply)
from src.geometry import DepthRaster, ImageRaster, Intrinsics, RigidPose
from src.synthdata import raycast_depth
from src.utils.errors import EmptyVolumeError, InvalidInputError

CENTER = np.array([0.0123, 0.0271, 0.0417])


def _sphere_volume(radius=5.0, voxel=0.25):
    vol = TsdfVolume(voxel_size=voxel)
    fill_from_sdf(vol, lambda p: np.linalg.norm(p - CENTER, axis=1) - radius, [-6.5] * 3, [6.5] * 3,
                  color_fn=lambda p: np.tile([0.8, 0.4, 0.2], (len(p), 1)))
    return vol


def _plane(k, z):
    return DepthRaster(np.full(k.shape, float(z)))


class TestVolume:
    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            VolumeConfig(voxel_size=0.0)
        vol = TsdfVolume.from_config(VolumeConfig())
        assert vol.truncation == pytest.approx(0.6)

    def test_integrating_twice_doubles_weight_only(self, small_k):
        once = TsdfVolume()
        integrate_frame(once, _plane(small_k, 10.0), None, RigidPose.identity(), small_k)
        twice = TsdfVolume()
        for _ in range(2):
            integrate_frame(twice, _plane(small_k, 10.0), None, RigidPose.identity(), small_k)
        t1, w1, _, lo1 = once.dense()
        t2, w2, _, lo2 = twice.dense()
        np.testing.assert_array_equal(lo1, lo2)
        np.testing.assert_allclose(t2, t1, atol=1e-12)
        np.testing.assert_array_equal(w2, 2 * w1)

    def test_weight_cap(self, small_k):
        vol = TsdfVolume(weight_cap=3)
        for _ in range(5):
            vol.integrate(_plane(small_k, 10.0), None, RigidPose.identity(), small_k)
        assert max(b.weight.max() for b in vol.blocks.values()) == 3

    def test_integration_order_does_not_matter(self, small_k, rng):
        frames = [
            (_plane(small_k, 10.0), ImageRaster(rng.random(small_k.shape + (3,)))),
            (_plane(small_k, 10.1), ImageRaster(rng.random(small_k.shape + (3,)))),
            ]
        results = []
        for order in (frames, frames[::-1]):
            vol = TsdfVolume()
            for depth, image in order:
                vol.integrate(depth, image, RigidPose.identity(), small_k)
            results.append(vol.dense())
        for a, b in zip(*results):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_far_voxels_behind_the_surface_are_untouched(self, small_k):
        vol = TsdfVolume()
        vol.integrate(_plane(small_k, 10.0), None, RigidPose.identity(), small_k)
        tsdf, weight, _, lo = vol.dense()
        z = (np.arange(tsdf.shape[2]) + lo[2]) * vol.voxel_size
        behind = z > 10.0 + vol.truncation + 1e-9
        assert behind.any()
        assert (weight[:, :, behind] == 0).all()
        assert (tsdf[weight > 0] >= -1.0).all() and (tsdf[weight > 0] <= 1.0).all()

    def test_empty_depth_is_a_no_op(self, small_k):
        vol = TsdfVolume()
        vol.integrate(DepthRaster(np.zeros(small_k.shape)), None, RigidPose.identity(), small_k)
        assert vol.is_empty


class TestMesh:
    def test_sphere_is_watertight_and_round(self):
        mesh = extract_mesh(_sphere_volume())
        assert mesh.is_watertight()
        radii = np.linalg.norm(mesh.vertices - CENTER, axis=1)
        assert np.mean(np.abs(radii - 5.0)) <= 0.125
        np.testing.assert_allclose(mesh.colors, np.tile([0.8, 0.4, 0.2], (len(mesh.colors), 1)), atol=1e-9)
        assert (mesh.triangle_areas() > 0).all()

    def test_fronto_parallel_plane(self, small_k):
        vol = TsdfVolume()
        vol.integrate(_plane(small_k, 10.0), None, RigidPose.identity(), small_k)
        mesh = extract_mesh(vol)
        assert not mesh.is_empty
        assert np.abs(mesh.vertices[:, 2] - 10.0).max() < vol.voxel_size / 2

    def test_unobserved_hole_leaves_a_gap(self):
        vol = TsdfVolume(voxel_size=0.25)
        fill_from_sdf(vol, lambda p: p[:, 2] - 0.1, [-2.0] * 3, [2.0] * 3)
        hole = vol.blocks[(0, 0, 0)]
        hole.tsdf[...], hole.weight[...] = 1.0, 0.0
        mesh = extract_mesh(vol)
        assert not mesh.is_empty
        assert np.abs(mesh.vertices[:, 2] - 0.1).max() < vol.voxel_size / 2
        span = vol.block_size * vol.voxel_size
        inside = (mesh.vertices[:, :2] > 0.0).all(axis=1) & (mesh.vertices[:, :2] < span - vol.voxel_size).all(axis=1)
        assert not inside.any()
        assert (np.bincount(mesh.faces.ravel(), minlength=len(mesh.vertices)) > 0).all()

    def test_tube_from_ground_truth(self, straight_scene):
        k = Intrinsics(26.65, 26.65, 31.5, 31.5, 64, 64)
        vol = TsdfVolume()
        for s in np.arange(2.0, 3.01, 0.2):
            pose = straight_scene.camera_pose(s, np.zeros(2))
            depth, image = raycast_depth(straight_scene, pose, k)
            vol.integrate(depth, image, pose, k)
        mesh = extract_mesh(vol)
        assert len(mesh.faces) > 100
        assert np.mean(np.abs(straight_scene.implicit(mesh.vertices))) <= 2 * vol.voxel_size

    def test_no_sign_change_gives_empty_mesh(self):
        vol = TsdfVolume(voxel_size=0.25)
        fill_from_sdf(vol, lambda p: np.linalg.norm(p, axis=1) + 1.0, [-1.0] * 3, [1.0] * 3)
        assert extract_mesh(vol).is_empty

    def test_empty_volume(self):
        with pytest.raises(EmptyVolumeError):
            extract_mesh(TsdfVolume())

    def test_face_index_validation(self):
        with pytest.raises(InvalidInputError):
            Mesh(np.zeros((3, 3)), np.zeros((3, 3)), [[0, 1, 3]])

    def test_ply_roundtrip(self, tmp_path):
        mesh = extract_mesh(_sphere_volume(radius=2.0, voxel=0.5))
        write_ply(tmp_path / 'mesh.ply', mesh)
        header = (tmp_path / 'mesh.ply').read_text().split('end_header')[0].splitlines()
        assert header[:2] == ['ply', 'format ascii 1.0']
        properties = [line.split()[-1] for line in header if line.startswith('property')]
        assert properties == ['x', 'y', 'z', 'red', 'green', 'blue', 'vertex_indices']
        back = read_ply(tmp_path / 'mesh.ply')
        np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-6)
        np.testing.assert_allclose(back.colors, mesh.colors, atol=1 / 255)
        np.testing.assert_array_equal(back.faces, mesh.faces)


class TestScheduler:
    GATE = FusionGate(eps_f_na=90, eps_cf_d=3.0)

    def _state(self, last_inspected, position, fused=False):
        return FragmentState(0, last_inspected, np.asarray(position, dtype=np.float64), fused)

    def test_recent_fragment_waits(self):
        assert fusion_scheduler([self._state(199, [0, 0, 0])], 200, [0, 0, 10], self.GATE) == []

    def test_old_and_far_fragment_is_fused(self):
        assert fusion_scheduler([self._state(100, [0, 0, 0])], 191, [0, 0, 3.01], self.GATE) == [0]

    def test_old_but_near_fragment_waits(self):
        assert fusion_scheduler([self._state(0, [0, 0, 0])], 500, [0, 0, 2.0], self.GATE) == []

    def test_boundary_is_exclusive(self):
        assert fusion_scheduler([self._state(100, [0, 0, 0])], 190, [0, 0, 10], self.GATE) == []

    def test_fused_fragment_is_skipped(self):
        assert fusion_scheduler([self._state(0, [0, 0, 0], fused=True)], 500, [0, 0, 10], self.GATE) == []

    def test_invalid_gate(self):
        with pytest.raises(InvalidInputError):
            FusionGate(eps_f_na=0)

    def test_replay_fuses_each_fragment_once(self, small_k):
        fragments = []
        for n in range(20):
            fragment = Fragment(id=n, keyframe=10 * n)
            for m in range(10 * n, 10 * n + 10):
                fragment.append(m, RigidPose.identity())
            fragments.append(fragment)
        frame_poses = {i: RigidPose(np.eye(3), [0.0, 0.0, 0.1 * i]) for i in range(200)}
        keyframe_poses = {f.keyframe: frame_poses[f.keyframe] for f in fragments}

        def last_inspected_at(fragment_id, frame_id):
            return min(10 * fragment_id + 9, frame_id)

        scheduler = FusionScheduler(self.GATE, TsdfVolume(), small_k,
                                    lambda i: (_plane(small_k, 10.0), None), last_inspected_at)
        scheduler.run(fragments, frame_poses, keyframe_poses)
        assert scheduler.events[0] == FusionEvent(0, 100, 10)
        assert [e.frame_id for e in scheduler.events[:10]] == list(range(100, 200, 10))
        assert all(e.flushed for e in scheduler.events[10:])
        assert sorted(scheduler.fused_fragments) == list(range(20))
        assert not scheduler.volume.is_empty
