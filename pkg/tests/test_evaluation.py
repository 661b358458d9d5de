import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.evaluation import (DEPTH_TABLE_COLUMNS, DepthMetrics, GtFrame, ate,
                            correspondence_pr, depth_metrics, group_matches,
                            gt_correspondences, loop_closure_gap,
                            mean_depth_metrics, read_report, report_table,
                            umeyama_alignment, write_report, write_table)
from src.geometry import DepthRaster, Intrinsics, RigidPose
from src.utils.errors import (DimensionMismatchError, InvalidInputError,
                              MalformedSequenceError, MissingGroundTruthError)

from conftest import random_pose


def _trajectory(rng, n=50):
    return {i: random_pose(rng, angle=0.5, shift=20.0) for i in range(n)}


def _moved(poses, rotation, translation, scale=1.0):
    return {i: RigidPose(rotation @ p.rotation, scale * rotation @ p.translation + translation) for i, p in poses.items()}


# ── Depth ────────────────────────────────────────────────────────────────

class TestDepthMetrics:
    def _gt(self, rng):
        return DepthRaster(rng.uniform(1.0, 5.0, (24, 32)))

    def test_perfect_prediction(self, rng):
        gt = self._gt(rng)
        m = depth_metrics(gt, gt)
        assert m.abs_rel == m.sq_rel == m.rmse == m.rmse_log == 0.0
        assert m.delta1 == m.delta2 == m.delta3 == 1.0

    def test_median_scaling_removes_global_scale(self, rng):
        gt = self._gt(rng)
        m = depth_metrics(DepthRaster(2.0 * gt.values), gt)
        assert m.abs_rel == pytest.approx(0.0, abs=1e-12)
        assert m.delta1 == 1.0

    def test_without_median_scaling(self, rng):
        gt = self._gt(rng)
        m = depth_metrics(DepthRaster(2.0 * gt.values), gt, median_scaling=False)
        assert m.abs_rel == pytest.approx(1.0)
        assert m.rmse_log == pytest.approx(np.log(2.0))
        assert m.delta1 == m.delta2 == m.delta3 == 0.0

    def test_matches_a_pixel_loop(self, rng):
        gt = self._gt(rng)
        pred = rng.uniform(1.0, 5.0, gt.values.shape)
        pred[rng.random(pred.shape) < 0.2] = 0.0
        m = depth_metrics(DepthRaster(pred), gt)

        pairs = [(p, g) for p, g in zip(pred.ravel(), gt.values.ravel()) if p > 0 and g > 0]
        scale = np.median([g for _, g in pairs]) / np.median([p for p, _ in pairs])
        abs_rel, sq_rel, sq, sq_log, d1 = 0.0, 0.0, 0.0, 0.0, 0
        for p, g in pairs:
            p *= scale
            abs_rel += abs(p - g) / g
            sq_rel += (p - g) ** 2 / g
            sq += (p - g) ** 2
            sq_log += (np.log(p) - np.log(g)) ** 2
            d1 += max(p / g, g / p) < 1.25
        n = len(pairs)
        assert m.abs_rel == pytest.approx(abs_rel / n)
        assert m.sq_rel == pytest.approx(sq_rel / n)
        assert m.rmse == pytest.approx(np.sqrt(sq / n))
        assert m.rmse_log == pytest.approx(np.sqrt(sq_log / n))
        assert m.delta1 == pytest.approx(d1 / n)

    def test_errors(self, rng):
        gt = self._gt(rng)
        with pytest.raises(DimensionMismatchError):
            depth_metrics(DepthRaster(np.ones((4, 4))), gt)
        with pytest.raises(InvalidInputError):
            depth_metrics(DepthRaster(np.zeros(gt.values.shape)), gt)
        with pytest.raises(InvalidInputError):
            mean_depth_metrics([])

    def test_mean(self):
        a = DepthMetrics(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
        b = DepthMetrics(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
        mean = mean_depth_metrics([a, b])
        assert mean.abs_rel == pytest.approx(0.2)
        assert mean.delta3 == pytest.approx(0.8)
        assert DepthMetrics.columns() == DEPTH_TABLE_COLUMNS


# ── Trajectory ───────────────────────────────────────────────────────────

class TestAte:
    def test_identical_trajectories(self, rng):
        gt = _trajectory(rng)
        report = ate(gt, gt)
        assert report.rmse == pytest.approx(0.0, abs=1e-9)
        assert report.scale == pytest.approx(1.0)

    def test_similarity_invariance(self, rng):
        gt = _trajectory(rng)
        rotation = Rotation.from_rotvec([0.3, -1.2, 0.7]).as_matrix()
        pred = _moved(gt, rotation, np.array([5.0, -3.0, 8.0]), scale=2.5)
        report = ate(pred, gt)
        assert report.rmse == pytest.approx(0.0, abs=1e-9)
        assert report.scale == pytest.approx(1 / 2.5)
        assert ate(pred, gt, mode='rigid').rmse > 1.0

    def test_first_frame_alignment(self, rng):
        gt = _trajectory(rng)
        g = random_pose(rng, angle=1.0, shift=10.0)
        pred = {i: g @ p for i, p in gt.items()}
        assert ate(pred, gt, mode='first_frame').rmse == pytest.approx(0.0, abs=1e-9)

    def test_rigid_alignment_matches_scipy(self, rng):
        gt = _trajectory(rng)
        pred = {i: RigidPose(p.rotation, p.translation + rng.normal(0.0, 0.5, 3)) for i, p in gt.items()}
        ids = sorted(gt)
        p = np.array([pred[i].translation for i in ids])
        g = np.array([gt[i].translation for i in ids])
        rotation, _ = Rotation.align_vectors(g - g.mean(axis=0), p - p.mean(axis=0))
        aligned = rotation.apply(p - p.mean(axis=0)) + g.mean(axis=0)
        expected = np.sqrt(np.mean(np.sum((aligned - g) ** 2, axis=1)))
        assert ate(pred, gt, mode='rigid').rmse == pytest.approx(expected, abs=1e-9)

    def test_umeyama_recovers_a_planted_similarity(self, rng):
        src = rng.normal(0.0, 10.0, (30, 3))
        rotation = Rotation.from_rotvec([0.1, 0.2, -0.3]).as_matrix()
        dst = 0.7 * src @ rotation.T + [1.0, 2.0, 3.0]
        r, t, s = umeyama_alignment(src, dst)
        np.testing.assert_allclose(r, rotation, atol=1e-9)
        np.testing.assert_allclose(t, [1.0, 2.0, 3.0], atol=1e-9)
        assert s == pytest.approx(0.7)

    def test_isotropic_noise(self):
        rng = np.random.default_rng(1)
        sigma = 0.1
        gt = _trajectory(rng, n=2000)
        pred = {i: RigidPose(p.rotation, p.translation + rng.normal(0.0, sigma, 3)) for i, p in gt.items()}
        report = ate(pred, gt)
        assert report.rmse == pytest.approx(sigma * np.sqrt(3), rel=0.1)
        assert report.std == pytest.approx(np.std(report.errors))

    def test_errors(self, rng):
        gt = _trajectory(rng, n=5)
        with pytest.raises(MissingGroundTruthError):
            ate({**gt, 9: RigidPose.identity()}, gt)
        with pytest.raises(InvalidInputError):
            ate({0: gt[0], 1: gt[1]}, gt)
        with pytest.raises(InvalidInputError):
            ate(gt, gt, mode='sim3')

    def test_loop_closure_gap(self):
        forward = [RigidPose(np.eye(3), [float(i), 0.0, 0.0]) for i in range(10)]
        retraced = {i: forward[min(i, 19 - i)] for i in range(20)}
        assert loop_closure_gap(retraced, 10) == 0.0
        drifted = {i: forward[i] if i < 10 else RigidPose(np.eye(3), forward[19 - i].translation + [0.0, 0.5, 0.0]) for i in range(20)}
        assert loop_closure_gap(drifted, 10) == pytest.approx(0.5)


# ── Correspondences ──────────────────────────────────────────────────────

class TestCorrespondencePr:
    K = Intrinsics(32.0, 32.0, 31.5, 31.5, 64, 64)
    SHIFT = 0.2

    def _frames(self):
        """Two views of the plane z = 10; the second camera sits SHIFT cm along +x."""
        u, v = np.meshgrid(np.arange(12.0, 53.0, 10.0), np.arange(12.0, 53.0, 10.0))
        uv_a = np.column_stack([u.ravel(), v.ravel()])
        uv_b = uv_a - [self.SHIFT * self.K.fx / 10.0, 0.0]
        depth = DepthRaster(np.full(self.K.shape, 10.0))
        return {
            0: GtFrame(uv_a, depth, RigidPose.identity()),
            1: GtFrame(uv_b, depth, RigidPose(np.eye(3), [self.SHIFT, 0.0, 0.0])),
            }

    def test_ground_truth_pairs(self):
        frames = self._frames()
        gt = gt_correspondences(frames[0], frames[1], self.K)
        assert gt == {(n, n) for n in range(25)}

    def test_tolerance_follows_the_depth_cloud(self):
        # one keypoint per frame: 0.5 px off its true reprojection, 0.156 cm on the plane
        depth = DepthRaster(np.full(self.K.shape, 10.0))
        true_u = 31.5 - self.SHIFT * self.K.fx / 10.0
        frame_a = GtFrame(np.array([[31.5, 31.5]]), depth, RigidPose.identity())
        frame_b = GtFrame(np.array([[true_u + 0.5, 31.5]]), depth, RigidPose(np.eye(3), [self.SHIFT, 0.0, 0.0]))
        assert gt_correspondences(frame_a, frame_b, self.K) == {(0, 0)}
        assert gt_correspondences(frame_a, frame_b, self.K, tol_fraction=0.005) == set()

    def test_full_and_half_predictions(self):
        frames = self._frames()
        full = correspondence_pr({(0, 1): {(n, n) for n in range(25)}}, frames, self.K)
        assert (full.precision, full.recall) == (1.0, 1.0)
        half = correspondence_pr({(0, 1): {(n, n) for n in range(0, 25, 2)} | {(n, n + 1) for n in range(1, 24, 2)}}, frames, self.K)
        assert half.precision == pytest.approx(13 / 25)
        assert half.recall == pytest.approx(13 / 25)
        subset = correspondence_pr({(0, 1): {(n, n) for n in range(0, 25, 2)}}, frames, self.K)
        assert subset.precision == 1.0
        assert subset.recall == pytest.approx(13 / 25)

    def test_empty_prediction(self):
        pr = correspondence_pr({}, self._frames(), self.K, pairs=[(0, 1)])
        assert pr.precision is None
        assert pr.recall == 0.0
        assert pr.ground_truth == 25

    def test_missing_frame(self):
        with pytest.raises(MissingGroundTruthError):
            correspondence_pr({(0, 2): {(0, 0)}}, self._frames(), self.K)

    def test_group_matches(self):
        rows = np.array([[0, 1, 3, 4], [0, 1, 5, 6], [2, 7, 0, 0]])
        assert group_matches(rows) == {(0, 1): {(3, 4), (5, 6)}, (2, 7): {(0, 0)}}


# ── Report files ─────────────────────────────────────────────────────────

class TestReports:
    def test_report_roundtrip(self, tmp_path):
        write_report(tmp_path / 'report.txt', {'frames': 40, 'final_cost': 0.125, 'precision': None, 'global': True})
        assert read_report(tmp_path / 'report.txt') == {
            'frames': '40', 'final_cost': '0.125', 'precision': 'undefined', 'global': 'True'}

    def test_malformed_report(self, tmp_path):
        (tmp_path / 'report.txt').write_text('frames 40\n')
        with pytest.raises(MalformedSequenceError, match='report.txt'):
            read_report(tmp_path / 'report.txt')

    def test_table(self, tmp_path):
        rows = [{'sequence': 'a', 'precision': 1.0, 'recall': 0.5, 'extra': 3}, {'sequence': 'b', 'recall': 0.0}]
        table = report_table(rows, ['precision', 'recall'], index='sequence')
        assert list(table.columns) == ['sequence', 'precision', 'recall']
        write_table(tmp_path / 'table.tsv', table)
        assert (tmp_path / 'table.tsv').read_text().splitlines() == [
            'sequence\tprecision\trecall',
            'a\t1\t0.5',
            'b\tundefined\t0',
            ]
