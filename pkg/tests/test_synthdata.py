import numpy as np
import pytest

from src.datasets.modules.media_rw import (frame_path, gt_depth_path,
                                           load_features, load_raster,
                                           read_intrinsics, read_match_rows)
from src.geometry import (DepthRaster, Intrinsics, backproject_points,
                          pixel_grid, sample_depth)
from src.posegraph import read_trajectory
from src.synthdata import (SceneConfig, SequenceSpec, TubeScene, camera_path,
                           generate_sequence, raycast_depth)
from src.utils.errors import ConfigError, InvalidInputError, InvalidSpecError

from conftest import render_frames

SMALL_SPEC = dict(frames=8, width=48, height=48, fx=20.0, fy=20.0, cx=23.5, cy=23.5)


class TestTubeScene:
    def test_default_scene_builds(self):
        scene = TubeScene.build(SceneConfig(), seed=0)
        assert len(scene.landmarks) == round(4.0 * 2.0 * np.pi * 2.5 * 40.0)
        assert scene.landmark_normals.shape == scene.landmarks.shape
        np.testing.assert_allclose(np.linalg.norm(scene.landmark_normals, axis=1), 1.0)

    def test_closest_parameter_on_a_bent_centerline(self, tube_scene):
        s = np.linspace(1.0, 39.0, 200)
        theta = np.linspace(0.0, 6.0 * np.pi, 200)
        x_axis, y_axis, _ = tube_scene.axes(s)
        radial = np.cos(theta)[:, None] * x_axis + np.sin(theta)[:, None] * y_axis
        points = tube_scene.centerline(s) + 2.5 * radial
        np.testing.assert_allclose(tube_scene.closest_parameter(points), s, atol=1e-6)
        np.testing.assert_allclose(tube_scene.implicit(points), 2.5 - tube_scene.radius(s), atol=1e-6)

    def test_straight_cylinder_depth_is_radially_symmetric(self, straight_scene):
        k = Intrinsics(20.0, 20.0, 15.5, 15.5, 32, 32)
        depth, _ = raycast_depth(straight_scene, straight_scene.camera_pose(2.0, np.zeros(2)), k)
        values = depth.values
        assert (values > 0).any()
        np.testing.assert_allclose(values, np.fliplr(values), atol=1e-3)
        np.testing.assert_allclose(values, np.flipud(values), atol=1e-3)
        np.testing.assert_allclose(values, values.T, atol=1e-3)

    def test_perpendicular_ray_hits_at_the_radius(self, straight_scene):
        hits = straight_scene.raycast(np.array([0.0, 0.0, 5.0]), np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]), 6.0)
        np.testing.assert_allclose(hits, [2.5, 2.5], atol=1e-4)

    def test_depth_lands_on_the_wall(self, tube_scene):
        spec = SequenceSpec(frames=5)
        pose = camera_path(tube_scene, spec)[2]
        k = spec.intrinsics
        depth, image = raycast_depth(tube_scene, pose, k)
        u, v = pixel_grid(k)
        d = depth.values.ravel()
        hit = d > 0
        assert hit.mean() > 0.5
        cam = backproject_points(np.column_stack([u.ravel(), v.ravel()])[hit], d[hit], k)
        assert np.abs(tube_scene.implicit(pose.apply(cam))).max() < 1e-3
        assert (image.values[~hit.reshape(k.shape)] == 0).all()

    def test_camera_outside_the_tube(self, straight_scene):
        with pytest.raises(InvalidInputError):
            straight_scene.raycast(np.array([10.0, 0.0, 5.0]), np.array([[1.0, 0.0, 0.0]]), 6.0)

    def test_landmarks_sit_on_the_surface(self, tube_scene):
        assert len(tube_scene.landmarks) > 0
        assert np.abs(tube_scene.implicit(tube_scene.landmarks)).max() < 1e-4
        np.testing.assert_allclose(np.linalg.norm(tube_scene.signatures, axis=1), 1.0)

    def test_invalid_scene(self):
        with pytest.raises(InvalidSpecError):
            SceneConfig(radius=0.0)
        with pytest.raises(InvalidSpecError):
            SceneConfig(bump_amplitude=1.0)


class TestSequenceSpec:
    @pytest.mark.parametrize('kwargs', [
        dict(dropout=1.0),
        dict(frames=10, occlusions=((8, 12),)),
        dict(path='loop'),
        dict(frames=0),
        dict(max_incidence_deg=0.0),
        ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidSpecError):
            SequenceSpec(**kwargs)

    def test_path_past_the_tube_end(self, tube_scene):
        with pytest.raises(InvalidSpecError):
            camera_path(tube_scene, SequenceSpec(frames=300))

    def test_forward_backward_revisits_poses(self, tube_scene):
        n = 21
        poses = camera_path(tube_scene, SequenceSpec(frames=n, path='forward_backward'))
        assert sorted(poses) == list(range(n))
        for i in range(n):
            assert poses[i].allclose(poses[n - 1 - i])
        assert not poses[0].allclose(poses[n // 2])

    def test_camera_path_is_seeded(self, tube_scene):
        spec = SequenceSpec(frames=10)
        a, b = camera_path(tube_scene, spec, seed=3), camera_path(tube_scene, spec, seed=3)
        c = camera_path(tube_scene, spec, seed=4)
        assert all(a[i].allclose(b[i], atol=0.0) for i in a)
        assert not all(a[i].allclose(c[i]) for i in a)


class TestSyntheticFrames:
    def test_noiseless_descriptors_repeat_across_frames(self, clean_frames):
        frames, _ = clean_frames
        a, b = frames[0], frames[3]
        common = np.intersect1d(a.landmark_ids[a.landmark_ids >= 0], b.landmark_ids[b.landmark_ids >= 0])
        assert len(common) > 0
        for landmark in common:
            da = a.descriptors[np.flatnonzero(a.landmark_ids == landmark)[0]]
            db = b.descriptors[np.flatnonzero(b.landmark_ids == landmark)[0]]
            np.testing.assert_array_equal(da, db)

    def test_noisy_descriptors_have_unit_norm(self, tube_scene):
        frames, _ = render_frames(tube_scene, SequenceSpec(frames=3, descriptor_noise=0.1))
        for frame in frames:
            np.testing.assert_allclose(np.linalg.norm(frame.descriptors, axis=1), 1.0)

    def test_occluded_frames(self, tube_scene):
        spec = SequenceSpec(frames=12, occlusions=((4, 6),))
        frames, _ = render_frames(tube_scene, spec)
        for frame in frames[4:6]:
            assert len(frame.uv) < 100
            assert frame.landmark_keypoints == 0
            assert (frame.depth == spec.occluder_depth).all()
        assert frames[3].landmark_keypoints >= 100
        assert frames[6].landmark_keypoints >= 100


class TestGenerateSequence:
    def test_layout(self, clean_sequence, clean_spec):
        assert read_intrinsics(clean_sequence) == clean_spec.intrinsics
        for i in range(clean_spec.frames):
            for suffix in ('rgb', 'depth', 'feat'):
                assert frame_path(clean_sequence, i, suffix).is_file()
            assert gt_depth_path(clean_sequence, i).is_file()
        assert sorted(read_trajectory(clean_sequence / 'gt' / 'poses.txt')) == list(range(clean_spec.frames))
        assert not list(clean_sequence.glob('.staging-*'))

    def test_ground_truth_matches_agree_with_the_files(self, clean_sequence):
        k = read_intrinsics(clean_sequence)
        poses = read_trajectory(clean_sequence / 'gt' / 'poses.txt')
        rows = read_match_rows(clean_sequence / 'gt' / 'matches.txt')
        assert len(rows) > 0
        assert (rows[:, 0] < rows[:, 1]).all()

        cache = {}

        def world(frame_id, kp):
            if frame_id not in cache:
                uv, _ = load_features(frame_path(clean_sequence, frame_id, 'feat'))
                depth = DepthRaster(load_raster(frame_path(clean_sequence, frame_id, 'depth'), k.height, k.width))
                d = sample_depth(depth, uv)
                points = np.full((len(uv), 3), np.nan)
                points[d > 0] = poses[frame_id].apply(backproject_points(uv[d > 0], d[d > 0], k))
                cache[frame_id] = points
            return cache[frame_id][kp]

        residuals = []
        for a, b, kp_a, kp_b in rows[::max(1, len(rows) // 500)]:
            pa, pb = world(a, kp_a), world(b, kp_b)
            if np.isfinite(pa).all() and np.isfinite(pb).all():
                residuals.append(np.linalg.norm(pa - pb))
        assert len(residuals) > 100
        assert max(residuals) < 1e-3

    def test_deterministic(self, tube_scene, tmp_path):
        spec = SequenceSpec(**SMALL_SPEC)
        for name in ('a', 'b'):
            generate_sequence(tube_scene, spec, tmp_path / name, seed=7)
        files = sorted(p.relative_to(tmp_path / 'a') for p in (tmp_path / 'a').rglob('*') if p.is_file())
        assert files
        for rel in files:
            assert (tmp_path / 'a' / rel).read_bytes() == (tmp_path / 'b' / rel).read_bytes(), rel

    def test_refuses_to_overwrite(self, tube_scene, tmp_path):
        spec = SequenceSpec(**SMALL_SPEC)
        summary = generate_sequence(tube_scene, spec, tmp_path / 'seq')
        assert summary.frames == 8 and summary.empty_frames == 0
        with pytest.raises(ConfigError):
            generate_sequence(tube_scene, spec, tmp_path / 'seq')

    def test_mostly_empty_sequence_is_rejected(self, tube_scene, tmp_path):
        spec = SequenceSpec(**SMALL_SPEC, occlusions=((0, 6),))
        with pytest.raises(InvalidSpecError):
            generate_sequence(tube_scene, spec, tmp_path / 'seq')
        assert not (tmp_path / 'seq' / 'intrinsics.txt').exists()
        assert not list((tmp_path / 'seq').glob('.staging-*'))
