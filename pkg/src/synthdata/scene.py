from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from src.geometry import RigidPose
from src.utils.errors import InvalidInputError, InvalidSpecError

__all__ = [
    'SceneConfig',
    'TubeScene',
    ]

BISECTION_STEPS = 16
NEWTON_STEPS = 3


@dataclass(frozen=True)
class SceneConfig:
    length: float = 40.0
    radius: float = 2.5
    bump_amplitude: float = 0.1
    bump_frequency: float = 0.5
    wiggle: float = 0.4
    control_points: int = 8
    landmark_density: float = 4.0
    descriptor_dim: int = 128
    samples_per_cm: int = 50

    def __post_init__(self):
        if not (self.length > 0 and self.radius > 0 and self.landmark_density > 0):
            raise InvalidSpecError('scene length, radius and landmark density must be positive')
        if not 0 <= self.bump_amplitude < 1:
            raise InvalidSpecError(f'scene.bump_amplitude must lie in [0, 1), got {self.bump_amplitude}')
        if self.wiggle < 0 or self.bump_frequency < 0:
            raise InvalidSpecError('scene.wiggle and scene.bump_frequency must be nonnegative')
        if self.control_points < 2 or self.descriptor_dim < 1 or self.samples_per_cm < 1:
            raise InvalidSpecError('scene needs >= 2 control points, a positive descriptor size and sampling rate')

    @classmethod
    def from_cfg(cls, cfg):
        return cls(**vars(cfg.scene))


class TubeScene:
    """
    Tube around a cubic-spline centerline s -> c(s) with radius r(s) = r0 (1 + a sin(2 pi f s)).
    The implicit function F(p) = |p - c(s*)| - r(s*), with s* the closest centerline
    parameter, is negative inside. Landmarks sit on F = 0 and carry unit signatures.
    """
    def __init__(self, cfg: SceneConfig, centerline: CubicSpline, landmarks, signatures):
        self.cfg = cfg
        self.centerline = centerline
        self.tangent_fn = centerline.derivative()
        self.bend_fn = centerline.derivative(2)
        self.length = cfg.length
        self.landmarks = np.asarray(landmarks, dtype=np.float64).reshape(-1, 3)
        self.signatures = np.asarray(signatures, dtype=np.float64)

        n_samples = int(np.ceil(cfg.length * cfg.samples_per_cm)) + 1
        self._s = np.linspace(0.0, cfg.length, n_samples)
        self._c = centerline(self._s)
        self._tree = cKDTree(self._c)
        self.landmark_normals = self.normal(self.landmarks) if len(self.landmarks) else np.zeros((0, 3))

    @classmethod
    def build(cls, cfg: SceneConfig, seed=0, centerline_points=None):
        """Random gentle centerline (or the given [n, 3] control points) and landmark set."""
        rng = np.random.default_rng([seed, 101])
        knots = np.linspace(0.0, cfg.length, cfg.control_points)
        if centerline_points is None:
            offsets = rng.uniform(-cfg.wiggle, cfg.wiggle, size=(cfg.control_points, 2))
            offsets[0] = 0.0
            centerline_points = np.column_stack([offsets, knots])
        centerline = CubicSpline(knots, np.asarray(centerline_points, dtype=np.float64), bc_type='natural')
        scene = cls(cfg, centerline, np.zeros((0, 3)), np.zeros((0, cfg.descriptor_dim)))

        area = 2.0 * np.pi * cfg.radius * cfg.length
        n = int(round(cfg.landmark_density * area))
        s = rng.uniform(0.0, cfg.length, size=n)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        x_axis, y_axis, _ = scene.axes(s)
        directions = np.cos(theta)[:, None] * x_axis + np.sin(theta)[:, None] * y_axis
        landmarks = scene.march_out(scene.centerline(s), directions, 2.0 * cfg.radius * (1.0 + cfg.bump_amplitude))
        signatures = rng.standard_normal((n, cfg.descriptor_dim))
        signatures /= np.linalg.norm(signatures, axis=1, keepdims=True)
        return cls(cfg, centerline, landmarks, signatures)

    def radius(self, s):
        return self.cfg.radius * (1.0 + self.cfg.bump_amplitude * np.sin(2.0 * np.pi * self.cfg.bump_frequency * np.asarray(s)))

    def tangent(self, s):
        t = self.tangent_fn(np.asarray(s, dtype=np.float64))
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def axes(self, s):
        """Orthonormal (x, y, tangent) frames along the centerline; x follows the world x axis."""
        t = self.tangent(np.atleast_1d(s))
        ref = np.array([1.0, 0.0, 0.0])
        x = ref - (t @ ref)[:, None] * t
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y = np.cross(t, x)
        return x, y, t

    def closest_parameter(self, points, newton_steps=NEWTON_STEPS):
        """
        Centerline parameter closest to each point: nearest sample, then Newton steps on
        (p - c(s)) . c'(s) = 0.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        _, idx = self._tree.query(points)
        s = self._s[idx].copy()
        for _ in range(newton_steps):
            offset = points - self.centerline(s)
            d1 = self.tangent_fn(s)
            slope = np.einsum('ij,ij->i', offset, self.bend_fn(s)) - np.einsum('ij,ij->i', d1, d1)
            # the nearest-sample start keeps the slope negative; guard the degenerate case
            slope = np.where(slope < -1e-9, slope, -np.einsum('ij,ij->i', d1, d1))
            s = np.clip(s - np.einsum('ij,ij->i', offset, d1) / slope, 0.0, self.length)
        return s

    def implicit(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        s = self.closest_parameter(points)
        return np.linalg.norm(points - self.centerline(s), axis=1) - self.radius(s)

    def normal(self, points, h=1e-5):
        """Outward unit normals from central differences of the implicit function."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        grad = np.empty_like(points)
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = h
            grad[:, axis] = (self.implicit(points + step) - self.implicit(points - step)) / (2.0 * h)
        return grad / np.linalg.norm(grad, axis=1, keepdims=True)

    def march_out(self, origins, directions, reach, n_steps=64):
        """First outward crossing of F = 0 along origins + t directions, t in (0, reach]."""
        origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        t_hit = self._march(origins, directions, reach, reach / n_steps, steps=60)
        if np.any(t_hit <= 0):
            raise InvalidInputError('ray did not leave the tube')
        return origins + t_hit[:, None] * directions

    def _march(self, origins, directions, t_max, step, steps=BISECTION_STEPS):
        """
        Fixed-step search for the first sign change of F from inside to outside, refined by
        bisection. Returns the crossing parameter per ray, 0 where none within t_max.
        """
        n = len(origins)
        lo = np.zeros(n)
        hi = np.zeros(n)
        active = np.ones(n, dtype=bool)
        for t in np.arange(step, t_max + step, step):
            idx = np.flatnonzero(active)
            if len(idx) == 0:
                break
            crossed = self.implicit(origins[idx] + t * directions[idx]) >= 0.0
            hit = idx[crossed]
            lo[hit], hi[hit] = t - step, t
            active[hit] = False
        found = ~active
        idx = np.flatnonzero(found)
        for _ in range(steps):
            if len(idx) == 0:
                break
            mid = 0.5 * (lo[idx] + hi[idx])
            outside = self.implicit(origins[idx] + mid[:, None] * directions[idx]) >= 0.0
            hi[idx[outside]] = mid[outside]
            lo[idx[~outside]] = mid[~outside]
        return np.where(found, 0.5 * (lo + hi), 0.0)

    def raycast(self, origin, directions, max_depth, step=0.1):
        """
        Camera rays (directions with unit camera-z component, in world coordinates) from a
        camera inside the tube. Returns camera depth per ray, 0 where the wall lies beyond
        max_depth. Bisection stops below 1e-4 cm.
        """
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        if self.implicit(origin[None])[0] >= 0.0:
            raise InvalidInputError(f'camera at {origin.round(4).tolist()} is outside the tube')
        directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
        origins = np.broadcast_to(origin, directions.shape)
        depth = self._march(origins, directions, max_depth, step)
        return np.where(depth <= max_depth, depth, 0.0)

    def camera_pose(self, s, offset=(0.0, 0.0)):
        """Camera at c(s) shifted in the cross-section, looking down the tangent."""
        x, y, t = (a[0] for a in self.axes(s))
        position = self.centerline(float(s)) + offset[0] * x + offset[1] * y
        return RigidPose(np.column_stack([x, y, t]), position)

    def albedo(self, points):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        pattern = np.sin(3.1 * points[:, 0]) * np.sin(2.7 * points[:, 1]) * np.sin(1.9 * points[:, 2])
        base = np.array([0.82, 0.42, 0.36])
        return base[None, :] * (0.85 + 0.15 * pattern)[:, None]

    def shade(self, points, normals, view_dirs):
        """Headlight Lambert plus a sharp specular lobe, clipped to [0, 1]."""
        view_dirs = view_dirs / np.linalg.norm(view_dirs, axis=1, keepdims=True)
        cos_inc = np.abs(np.einsum('ij,ij->i', normals, view_dirs))
        color = self.albedo(points) * (0.25 + 0.75 * cos_inc)[:, None] + 0.6 * (cos_inc ** 60)[:, None]
        return np.clip(color, 0.0, 1.0)
