import numpy as np
import pytest

from src.geometry import DepthRaster, RigidPose, backproject_points, project_points
from src.matching import (CorrespondenceSet, FilterConfig, Keypoints,
                          MatchList, estimate_rigid,
                          keypoint_correspondence_filter, match_descriptors,
                          normalize_descriptors, register_pair, residual_norms,
                          span_area, surface_area_filter, validate_transform)
from src.synthdata import SequenceSpec
from src.utils.errors import (DegenerateConfigurationError,
                              DimensionMismatchError, InvalidInputError)

from conftest import frame_keypoints, random_pose, render_frames

CFG = FilterConfig()


def _spread_points(rng, n):
    """Camera-space points filling a good part of the view."""
    return np.column_stack([rng.uniform(-1.5, 1.5, n), rng.uniform(-1.5, 1.5, n), rng.uniform(3.0, 5.0, n)])


def _keypoints(points, descriptors, k):
    points = np.asarray(points, dtype=np.float64)
    uv, _ = project_points(points, k)
    return Keypoints(uv, points[:, 2], points, normalize_descriptors(descriptors), np.arange(len(points)))


def _pair(rng, k, n, transform=None, noise=0.0, points=None):
    """Keypoints of frame i and their rigidly moved copies in frame j, sharing descriptors."""
    transform = transform or random_pose(rng, angle=0.05, shift=0.2)
    p_i = _spread_points(rng, n) if points is None else points
    p_j = transform.apply(p_i) + noise * rng.normal(size=p_i.shape)
    descriptors = rng.normal(size=(n, 128))
    return _keypoints(p_i, descriptors, k), _keypoints(p_j, descriptors, k), transform


def _matches(n):
    return MatchList(np.stack([np.arange(n), np.arange(n)], axis=1), np.ones(n))


# ── Keypoints ────────────────────────────────────────────────────────────

class TestKeypoints:
    def test_lift_drops_keypoints_without_depth(self, k):
        values = np.full(k.shape, 3.0)
        values[:, :50] = 0.0
        uv = np.array([[10.0, 5.0], [100.0, 60.0], [70.5, 70.5]])
        kp = Keypoints.lift(uv, np.eye(3, 128) * 2.0, DepthRaster(values), k)
        assert kp.index.tolist() == [1, 2]
        np.testing.assert_allclose(kp.points, backproject_points(uv[1:], [3.0, 3.0], k))
        np.testing.assert_allclose(np.linalg.norm(kp.descriptors, axis=1), 1.0)

    def test_lift_shape_mismatch(self, k):
        with pytest.raises(DimensionMismatchError):
            Keypoints.lift(np.zeros((3, 2)), np.ones((2, 128)), DepthRaster(np.ones(k.shape)), k)

    def test_zero_descriptor(self):
        with pytest.raises(InvalidInputError):
            normalize_descriptors(np.zeros((1, 4)))

    def test_raw_indices(self, rng, k):
        kp_i, kp_j, _ = _pair(rng, k, 5)
        kp_j = Keypoints(kp_j.uv, kp_j.depth, kp_j.points, kp_j.descriptors, kp_j.index + 10)
        rows = MatchList(np.array([[0, 1], [3, 4]]), np.ones(2)).raw_indices(kp_i, kp_j)
        assert rows.tolist() == [[0, 11], [3, 14]]


# ── Descriptor matching ──────────────────────────────────────────────────

class TestDescriptorMatching:
    def test_identical_descriptors_match_one_to_one(self, rng, k):
        kp, _, _ = _pair(rng, k, 40)
        matches = match_descriptors(kp, kp, CFG)
        assert len(matches) == 40
        np.testing.assert_array_equal(matches.pairs[:, 0], matches.pairs[:, 1])
        np.testing.assert_allclose(matches.similarity, 1.0)

    def test_orthogonal_descriptors_do_not_match(self, k):
        points = np.column_stack([np.arange(5.0), np.zeros(5), np.full(5, 4.0)])
        kp_i = _keypoints(points, np.eye(128)[:5], k)
        kp_j = _keypoints(points, np.eye(128)[5:10], k)
        assert len(match_descriptors(kp_i, kp_j, CFG)) == 0

    def test_noisy_descriptors_still_match_correctly(self, rng, k):
        signatures = rng.normal(size=(50, 128))
        points = _spread_points(rng, 50)
        kp_i = _keypoints(points, signatures + 0.05 * rng.normal(size=signatures.shape), k)
        kp_j = _keypoints(points, signatures + 0.05 * rng.normal(size=signatures.shape), k)
        matches = match_descriptors(kp_i, kp_j, CFG)
        assert len(matches) == 50
        np.testing.assert_array_equal(matches.pairs[:, 0], matches.pairs[:, 1])

    def test_empty_side(self, rng, k):
        kp, _, _ = _pair(rng, k, 5)
        assert len(match_descriptors(kp, Keypoints.empty(), CFG)) == 0


# ── Keypoint correspondence filter ───────────────────────────────────────

class TestCorrespondenceFilter:
    def test_rigid_matches_survive(self, rng, k):
        kp_i, kp_j, _ = _pair(rng, k, 20)
        kept = keypoint_correspondence_filter(_matches(20), kp_i, kp_j, CFG)
        assert len(kept) == 20

    def test_planted_wrong_match_is_removed(self, rng, k):
        kp_i, kp_j, _ = _pair(rng, k, 20)
        points = kp_j.points.copy()
        points[7] += 20.0
        kp_j = Keypoints(kp_j.uv, kp_j.depth, points, kp_j.descriptors, kp_j.index)
        kept = keypoint_correspondence_filter(_matches(20), kp_i, kp_j, CFG)
        assert sorted(kept.pairs[:, 0].tolist()) == [i for i in range(20) if i != 7]

    def test_larger_clique_wins(self, rng, k):
        kp_i, kp_j, _ = _pair(rng, k, 18)
        points = kp_j.points.copy()
        points[15:] += 20.0
        kp_j = Keypoints(kp_j.uv, kp_j.depth, points, kp_j.descriptors, kp_j.index)
        kept = keypoint_correspondence_filter(_matches(18), kp_i, kp_j, CFG)
        assert sorted(kept.pairs[:, 0].tolist()) == list(range(15))

    def test_filter_is_idempotent(self, rng, k):
        kp_i, kp_j, _ = _pair(rng, k, 20)
        points = kp_j.points.copy()
        points[[2, 11]] += rng.normal(0.0, 3.0, (2, 3))
        kp_j = Keypoints(kp_j.uv, kp_j.depth, points, kp_j.descriptors, kp_j.index)
        once = keypoint_correspondence_filter(_matches(20), kp_i, kp_j, CFG)
        twice = keypoint_correspondence_filter(once, kp_i, kp_j, CFG)
        np.testing.assert_array_equal(once.pairs, twice.pairs)


# ── Surface area filter ──────────────────────────────────────────────────

class TestSurfaceArea:
    def test_spread_points_pass(self, rng, k):
        points = _spread_points(rng, 40)
        assert surface_area_filter(points, points, k, CFG)

    def test_collinear_points_fail(self, k):
        points = np.column_stack([np.linspace(-1, 1, 20), np.zeros(20), np.full(20, 4.0)])
        assert span_area(points) == pytest.approx(0.0, abs=1e-12)
        assert not surface_area_filter(points, None, k, CFG)

    def test_small_cluster_against_threshold(self, k):
        image_area = (k.width * 4.0 / k.fx) * (k.height * 4.0 / k.fy)
        b = np.sqrt(0.0025 * image_area)
        x, y = np.meshgrid(np.linspace(0, 2 * b, 9), np.linspace(0, b, 5))
        points = np.column_stack([x.ravel(), y.ravel(), np.full(x.size, 4.0)])
        ok, areas = surface_area_filter(points, None, k, CFG, return_areas=True)
        assert not ok
        assert areas[0] == pytest.approx(0.005, rel=1e-6)
        assert surface_area_filter(points, None, k, FilterConfig(min_span_area_fraction=0.004))

    def test_too_few_points(self, k):
        assert not surface_area_filter(np.ones((2, 3)), None, k, CFG)


# ── Rigid estimation ─────────────────────────────────────────────────────

class TestRigid:
    def test_identity(self, rng):
        points = rng.normal(size=(10, 3))
        assert estimate_rigid(points, points).allclose(RigidPose.identity(), atol=1e-12)

    def test_recovers_planted_transforms(self, rng):
        for _ in range(1000):
            transform = random_pose(rng, angle=1.0, shift=5.0)
            src = rng.normal(size=(10, 3))
            assert estimate_rigid(src, transform.apply(src)).allclose(transform, atol=1e-9)

    def test_noise_residual(self, rng):
        sigma = 0.01
        for _ in range(100):
            transform = random_pose(rng)
            src = rng.normal(0.0, 2.0, size=(50, 3))
            dst = transform.apply(src) + sigma * rng.normal(size=src.shape)
            fitted = estimate_rigid(src, dst)
            rms = np.sqrt(np.mean(residual_norms(fitted, src, dst) ** 2))
            assert rms <= 3 * sigma

    def test_equivariance(self, rng):
        transform, g = random_pose(rng), random_pose(rng)
        src = rng.normal(size=(12, 3))
        moved = estimate_rigid(g.apply(src), g.apply(transform.apply(src)))
        assert moved.allclose(g @ transform @ g.inverse(), atol=1e-9)

    def test_planar_points_keep_a_proper_rotation(self, rng):
        transform = random_pose(rng, angle=1.0)
        src = np.column_stack([rng.normal(size=(10, 2)), np.zeros(10)])
        fitted = estimate_rigid(src, transform.apply(src))
        assert np.linalg.det(fitted.rotation) == pytest.approx(1.0)
        assert fitted.allclose(transform, atol=1e-9)

    def test_degenerate_inputs(self):
        line = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
        with pytest.raises(DegenerateConfigurationError):
            estimate_rigid(line, line)
        with pytest.raises(DegenerateConfigurationError):
            estimate_rigid(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(DimensionMismatchError):
            estimate_rigid(np.ones((4, 3)), np.ones((5, 3)))


# ── Validation and pair registration ─────────────────────────────────────

class TestRegistration:
    def test_well_spread_pair_is_valid(self, rng, k):
        kp_i, kp_j, transform = _pair(rng, k, 50)
        cs = register_pair(kp_i, kp_j, k, CFG, pair=(0, 1))
        assert cs.valid, cs.diagnostics
        assert cs.inlier_count == 50
        assert cs.transform.allclose(transform, atol=1e-9)

    def test_nine_matches_are_too_few(self, rng, k):
        kp_i, kp_j, _ = _pair(rng, k, 9)
        cs = register_pair(kp_i, kp_j, k, CFG)
        assert not cs.valid
        assert cs.diagnostics['reason'] == 'too_few_inliers'

    def test_collinear_matches_are_ill_conditioned(self, rng, k):
        points = np.column_stack([np.linspace(-1, 1, 50), np.zeros(50), np.full(50, 4.0)])
        kp = _keypoints(points, rng.normal(size=(50, 128)), k)
        cs = CorrespondenceSet((0, 1), _matches(50), kp, kp, transform=RigidPose.identity())
        valid, diagnostics = validate_transform(cs, k, CFG)
        assert not valid
        assert diagnostics['reason'] == 'ill_conditioned'
        assert not register_pair(kp, kp, k, CFG).valid

    def test_loosening_the_threshold_keeps_validity(self, rng, k):
        kp_i, kp_j, _ = _pair(rng, k, 60, noise=0.004)
        strict = register_pair(kp_i, kp_j, k, CFG)
        assert strict.valid
        loose = register_pair(kp_i, kp_j, k, FilterConfig(max_residual_cm=0.05))
        assert loose.valid
        assert loose.inlier_count >= strict.inlier_count

    def test_no_transform(self, k):
        cs = CorrespondenceSet((0, 1), MatchList.empty(), Keypoints.empty(), Keypoints.empty())
        valid, diagnostics = validate_transform(cs, k, CFG)
        assert not valid and diagnostics['reason'] == 'no_transform'

    def test_reversed_set(self, rng, k):
        kp_i, kp_j, transform = _pair(rng, k, 30)
        cs = register_pair(kp_i, kp_j, k, CFG, pair=(3, 4)).reversed()
        assert cs.pair == (4, 3)
        assert cs.transform.allclose(transform.inverse(), atol=1e-9)

    def test_noisy_descriptors_on_rendered_frames(self, tube_scene):
        spec = SequenceSpec(frames=2, descriptor_noise=0.05)
        frames, _ = render_frames(tube_scene, spec, seed=3)
        kp = [frame_keypoints(f, spec.intrinsics) for f in frames]
        cs = register_pair(kp[0], kp[1], spec.intrinsics, CFG, pair=(0, 1))
        assert len(cs.matches) >= 50
        rows = cs.matches.raw_indices(kp[0], kp[1])
        np.testing.assert_array_equal(frames[0].landmark_ids[rows[:, 0]], frames[1].landmark_ids[rows[:, 1]])
        assert cs.valid
