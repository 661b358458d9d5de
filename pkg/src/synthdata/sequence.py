import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from torch.utils.data import DataLoader, Dataset

from src.datasets.modules.media_rw import (DESCRIPTOR_DIM, frame_path,
                                           gt_depth_path, save_features,
                                           save_raster, write_intrinsics,
                                           write_match_rows)
from src.geometry import (DepthRaster, ImageRaster, Intrinsics, RigidPose,
                          pixel_grid, project_points)
from src.posegraph import write_trajectory
from src.utils.errors import ConfigError, InvalidSpecError

from .scene import TubeScene

__all__ = [
    'PATH_MODES',
    'SequenceSpec',
    'SyntheticFrame',
    'SyntheticFrames',
    'SynthesisSummary',
    'raycast_depth',
    'camera_path',
    'generate_sequence',
    ]

PATH_MODES = ('forward', 'forward_backward')


@dataclass(frozen=True)
class SequenceSpec:
    frames: int = 200
    speed: float = 0.15
    start: float = 1.0
    jitter: float = 0.02
    fx: float = 53.3
    fy: float = 53.3
    cx: float = 63.5
    cy: float = 63.5
    width: int = 128
    height: int = 128
    max_depth: float = 6.0
    max_incidence_deg: float = 75.0
    descriptor_noise: float = 0.0
    pixel_noise: float = 0.0
    depth_noise: float = 0.0
    dropout: float = 0.0
    occlusions: Tuple[Tuple[int, int], ...] = ()
    occluder_depth: float = 0.8
    garbage_keypoints: int = 20
    path: str = 'forward'
    gt_match_max_gap: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'occlusions', tuple((int(a), int(b)) for a, b in self.occlusions))
        if self.frames < 1:
            raise InvalidSpecError(f'sequence.frames must be >= 1, got {self.frames}')
        if not (self.speed > 0 and self.max_depth > 0 and self.occluder_depth > 0):
            raise InvalidSpecError('sequence.speed, max_depth and occluder_depth must be positive')
        for name in ('jitter', 'descriptor_noise', 'pixel_noise', 'depth_noise'):
            if getattr(self, name) < 0:
                raise InvalidSpecError(f'sequence.{name} must be nonnegative, got {getattr(self, name)}')
        if not 0 <= self.dropout < 1:
            raise InvalidSpecError(f'sequence.dropout must lie in [0, 1), got {self.dropout}')
        if not 0 < self.max_incidence_deg <= 90:
            raise InvalidSpecError(f'sequence.max_incidence_deg must lie in (0, 90], got {self.max_incidence_deg}')
        if self.path not in PATH_MODES:
            raise InvalidSpecError(f'sequence.path must be one of {PATH_MODES}, got {self.path!r}')
        if self.garbage_keypoints < 0 or self.gt_match_max_gap < 0:
            raise InvalidSpecError('sequence.garbage_keypoints and sequence.gt_match_max_gap must be nonnegative')
        for a, b in self.occlusions:
            if not 0 <= a < b <= self.frames:
                raise InvalidSpecError(f'occlusion range [{a}, {b}) outside the {self.frames}-frame sequence')

    @classmethod
    def from_cfg(cls, cfg):
        kwargs = dict(vars(cfg.sequence))
        kwargs['occlusions'] = tuple(tuple(r) for r in kwargs.get('occlusions') or ())
        return cls(**kwargs)

    @property
    def intrinsics(self):
        return Intrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def occluded(self, frame_id):
        return any(a <= frame_id < b for a, b in self.occlusions)


@dataclass
class SyntheticFrame:
    frame_id: int
    image: np.ndarray
    depth: np.ndarray
    gt_depth: np.ndarray
    uv: np.ndarray
    descriptors: np.ndarray
    landmark_ids: np.ndarray

    @property
    def landmark_keypoints(self):
        return int(np.count_nonzero(self.landmark_ids >= 0))


@dataclass
class SynthesisSummary:
    out_dir: Path
    frames: int
    empty_frames: int
    keypoints_per_frame: float
    gt_matches: int
    occluded_frames: List[int] = field(default_factory=list)

    def as_dict(self):
        return {
            'frames': self.frames,
            'empty_frames': self.empty_frames,
            'keypoints_per_frame': self.keypoints_per_frame,
            'gt_matches': self.gt_matches,
            'occluded_frames': len(self.occluded_frames),
            }


def _camera_rays(pose: RigidPose, k: Intrinsics, uv):
    """World directions of camera rays with unit camera-z component."""
    rays = np.column_stack([(uv[:, 0] - k.cx) / k.fx, (uv[:, 1] - k.cy) / k.fy, np.ones(len(uv))])
    return rays @ pose.rotation.T


def raycast_depth(scene: TubeScene, pose: RigidPose, k: Intrinsics, max_depth=6.0):
    """
    Depth and shaded color of every pixel center. Pixels whose wall lies beyond
    max_depth get depth 0 and black.
    return: DepthRaster, ImageRaster
    """
    u, v = pixel_grid(k)
    uv = np.column_stack([u.ravel(), v.ravel()])
    dirs = _camera_rays(pose, k, uv)
    depth = scene.raycast(pose.translation, dirs, max_depth)
    hit = depth > 0
    colors = np.zeros((len(uv), 3))
    if np.any(hit):
        points = pose.translation[None] + depth[hit, None] * dirs[hit]
        colors[hit] = scene.shade(points, scene.normal(points), dirs[hit])
    return DepthRaster(depth.reshape(k.shape)), ImageRaster(colors.reshape(*k.shape, 3))


def camera_path(scene: TubeScene, spec: SequenceSpec, seed=0) -> Dict[int, RigidPose]:
    """
    Camera-to-world poses advancing spec.speed cm per frame along the centerline with
    Gaussian cross-section jitter. The forward_backward path replays the first half in
    reverse so that frame i and frame n - 1 - i share a pose.
    """
    rng = np.random.default_rng([seed, 202])
    n = spec.frames
    n_forward = (n + 1) // 2 if spec.path == 'forward_backward' else n
    offsets = rng.normal(0.0, spec.jitter, size=(n_forward, 2)) if spec.jitter > 0 else np.zeros((n_forward, 2))
    forward = []
    for i in range(n_forward):
        s = spec.start + spec.speed * i
        if s > scene.length:
            raise InvalidSpecError(f'frame {i}: camera path at s={s:.3f} runs past the tube end ({scene.length})')
        pose = scene.camera_pose(s, offsets[i])
        if scene.implicit(pose.translation[None])[0] >= 0.0:
            raise InvalidSpecError(f'frame {i}: camera leaves the tube')
        forward.append(pose)
    if spec.path == 'forward':
        return dict(enumerate(forward))
    return {i: forward[min(i, n - 1 - i)] for i in range(n)}


class SyntheticFrames(Dataset):
    """Renders one frame per index; randomness is seeded by (seed, frame id) so workers agree."""
    def __init__(self, scene: TubeScene, spec: SequenceSpec, poses: Dict[int, RigidPose], seed=0):
        super().__init__()
        self.scene = scene
        self.spec = spec
        self.k = spec.intrinsics
        self.poses = poses
        self.seed = seed

    def __len__(self):
        return self.spec.frames

    def __getitem__(self, idx) -> SyntheticFrame:
        rng = np.random.default_rng([self.seed, idx])
        if self.spec.occluded(idx):
            return self._occluded_frame(idx, rng)
        return self._clear_frame(idx, rng)

    def _visible_landmarks(self, pose: RigidPose):
        """Landmark ids in view, within max_depth, under the incidence limit and not occluded."""
        scene, spec, k = self.scene, self.spec, self.k
        if len(scene.landmarks) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros((0, 3))
        cam = pose.inverse().apply(scene.landmarks)
        uv, in_view = project_points(cam, k)
        candidates = in_view & (cam[:, 2] <= spec.max_depth)
        view = scene.landmarks - pose.translation[None]
        cos_inc = np.einsum('ij,ij->i', view, scene.landmark_normals) / np.linalg.norm(view, axis=1)
        candidates &= cos_inc >= np.cos(np.deg2rad(spec.max_incidence_deg))
        ids = np.flatnonzero(candidates)
        if len(ids) == 0:
            return ids, np.zeros((0, 2)), np.zeros((0, 3))
        depth = scene.raycast(pose.translation, _camera_rays(pose, k, uv[ids]), spec.max_depth + 0.1)
        unoccluded = np.abs(depth - cam[ids, 2]) < 1e-3
        ids = ids[unoccluded]
        return ids, uv[ids], cam[ids]

    def _imprint(self, depth, uv, cam_points, cam_normals):
        """
        Overwrite the four bilinear neighbors of each keypoint with the depth of the
        landmark's tangent plane, so inverse-depth interpolation at uv returns the
        landmark depth exactly. Keypoints sharing a neighbor with an earlier one are dropped.
        """
        k = self.k
        h, w = depth.shape
        taken = np.zeros_like(depth, dtype=bool)
        keep = np.zeros(len(uv), dtype=bool)
        for n, ((u, v), p, normal) in enumerate(zip(uv, cam_points, cam_normals)):
            x0 = int(np.clip(np.floor(u), 0, w - 2))
            y0 = int(np.clip(np.floor(v), 0, h - 2))
            xs = np.array([x0, x0 + 1, x0, x0 + 1])
            ys = np.array([y0, y0, y0 + 1, y0 + 1])
            if taken[ys, xs].any():
                continue
            rays = np.column_stack([(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones(4)])
            denom = rays @ normal
            if np.any(np.abs(denom) < 1e-9):
                continue
            z = (normal @ p) / denom
            if np.any(z <= 0):
                continue
            depth[ys, xs] = z
            taken[ys, xs] = True
            keep[n] = True
        return keep

    def _descriptors(self, ids, rng):
        descriptors = self.scene.signatures[ids].copy()
        if self.spec.descriptor_noise > 0:
            descriptors += self.spec.descriptor_noise * rng.standard_normal(descriptors.shape)
            descriptors /= np.linalg.norm(descriptors, axis=1, keepdims=True)
        return descriptors

    def _clear_frame(self, frame_id, rng) -> SyntheticFrame:
        spec, k = self.spec, self.k
        pose = self.poses[frame_id]
        depth, image = raycast_depth(self.scene, pose, k, spec.max_depth)
        gt_depth = depth.values.copy()

        ids, uv, cam = self._visible_landmarks(pose)
        if spec.dropout > 0:
            survived = rng.random(len(ids)) >= spec.dropout
            ids, uv, cam = ids[survived], uv[survived], cam[survived]
        cam_normals = self.scene.landmark_normals[ids] @ pose.rotation
        keep = self._imprint(gt_depth, uv, cam, cam_normals)
        ids, uv = ids[keep], uv[keep]

        frame_depth = gt_depth.copy()
        if spec.depth_noise > 0:
            valid = frame_depth > 0
            frame_depth[valid] *= np.clip(1.0 + spec.depth_noise * rng.standard_normal(np.count_nonzero(valid)), 0.5, 1.5)
        if spec.pixel_noise > 0:
            uv = uv + spec.pixel_noise * rng.standard_normal(uv.shape)
            uv = np.clip(uv, 0.0, [k.width - 1, k.height - 1])
        return SyntheticFrame(
            frame_id, image.values, frame_depth, gt_depth, uv,
            self._descriptors(ids, rng), ids.astype(np.int64),
            )

    def _occluded_frame(self, frame_id, rng) -> SyntheticFrame:
        """A fold right in front of the lens: constant near depth, dark texture and a few garbage keypoints."""
        spec, k = self.spec, self.k
        depth = np.full(k.shape, spec.occluder_depth)
        base = np.array([0.35, 0.12, 0.10])
        image = np.clip(base[None, None, :] * (0.9 + 0.1 * rng.random((*k.shape, 1))), 0.0, 1.0)
        n = spec.garbage_keypoints
        uv = rng.uniform(0.0, 1.0, size=(n, 2)) * [k.width - 1, k.height - 1]
        descriptors = rng.standard_normal((n, DESCRIPTOR_DIM))
        descriptors /= np.linalg.norm(descriptors, axis=1, keepdims=True)
        return SyntheticFrame(frame_id, image, depth, depth.copy(), uv, descriptors, np.full(n, -1, dtype=np.int64))


def _passthrough(sample):
    return sample


def _gt_match_rows(frames: List[Tuple[int, np.ndarray]], max_gap=0):
    """Rows (a, b, kp_a, kp_b), a < b, for every landmark seen in both frames."""
    sightings: Dict[int, List[Tuple[int, int]]] = {}
    for frame_id, landmark_ids in frames:
        for kp, landmark in enumerate(landmark_ids.tolist()):
            if landmark >= 0:
                sightings.setdefault(landmark, []).append((frame_id, kp))
    rows = []
    for seen in sightings.values():
        for n, (a, kp_a) in enumerate(seen):
            for b, kp_b in seen[n + 1:]:
                if max_gap and b - a > max_gap:
                    break
                rows.append((a, b, kp_a, kp_b))
    rows.sort()
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def generate_sequence(scene: TubeScene, spec: SequenceSpec, out_dir, seed=0, num_workers=0, pbar=None) -> SynthesisSummary:
    """
    Render every frame and write a sequence directory (intrinsics.txt, frames/, gt/).
    Files are staged next to the output and moved in only after the sequence passes
    the visibility check.
    """
    out_dir = Path(out_dir)
    for name in ('intrinsics.txt', 'frames', 'gt'):
        if (out_dir / name).exists():
            raise ConfigError(f'{out_dir / name} already exists; refusing to overwrite a sequence')
    out_dir.mkdir(parents=True, exist_ok=True)

    poses = camera_path(scene, spec, seed)
    dataset = SyntheticFrames(scene, spec, poses, seed)
    loader = DataLoader(
        dataset,
        batch_size=None,
        shuffle=False,
        num_workers=num_workers,
        collate_fn=_passthrough,
        )

    staging = out_dir / f'.staging-{os.getpid()}'
    if staging.exists():
        shutil.rmtree(staging)
    (staging / 'frames').mkdir(parents=True)
    (staging / 'gt' / 'depth').mkdir(parents=True)
    try:
        write_intrinsics(staging, spec.intrinsics)
        sightings = []
        empty, keypoints = 0, 0
        for frame in loader:
            fid = frame.frame_id
            save_raster(frame_path(staging, fid, 'rgb'), frame.image)
            save_raster(frame_path(staging, fid, 'depth'), frame.depth)
            save_features(frame_path(staging, fid, 'feat'), frame.uv, frame.descriptors)
            save_raster(gt_depth_path(staging, fid), frame.gt_depth)
            sightings.append((fid, frame.landmark_ids))
            empty += frame.landmark_keypoints == 0
            keypoints += len(frame.uv)
            if pbar is not None:
                pbar.update(1)
        if empty > spec.frames / 2:
            raise InvalidSpecError(f'{empty} of {spec.frames} frames see no landmark; adjust the camera path or scene')
        rows = _gt_match_rows(sightings, spec.gt_match_max_gap)
        write_match_rows(staging / 'gt' / 'matches.txt', rows)
        write_trajectory(staging / 'gt' / 'poses.txt', poses)
        for name in ('intrinsics.txt', 'frames', 'gt'):
            os.replace(staging / name, out_dir / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    return SynthesisSummary(
        out_dir=out_dir,
        frames=spec.frames,
        empty_frames=int(empty),
        keypoints_per_frame=keypoints / spec.frames,
        gt_matches=len(rows),
        occluded_frames=[i for i in range(spec.frames) if spec.occluded(i)],
        )
