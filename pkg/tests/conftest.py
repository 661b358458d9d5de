import numpy as np
import pytest

from src.fragments import FragmentBuilder, FragmentConfig
from src.geometry import DepthRaster, Intrinsics, RigidPose
from src.matching import FilterConfig, Keypoints
from src.synthdata import (SceneConfig, SequenceSpec, SyntheticFrames,
                           TubeScene, camera_path, generate_sequence)
from src.utils.misc import ConfigMisc


# ── Helpers ──────────────────────────────────────────────────────────────

def random_pose(rng, angle=0.3, shift=1.0) -> RigidPose:
    """Rotation vector ~ N(0, angle) rad, translation ~ N(0, shift) cm."""
    return RigidPose.from_rotvec(rng.normal(0.0, angle, 3), rng.normal(0.0, shift, 3))


def relative_to(poses, anchor):
    """Poses re-expressed with `anchor` at the identity."""
    base = poses[anchor].inverse()
    return {i: base @ p for i, p in poses.items()}


def load_cfg(template, tokens=(), positionals=()):
    return ConfigMisc.get_configs(list(tokens), default_main=template, positionals=list(positionals))


def frame_keypoints(frame, k: Intrinsics) -> Keypoints:
    return Keypoints.lift(frame.uv, frame.descriptors, DepthRaster(frame.depth), k)


def build_fragments(frames, k: Intrinsics, filter_cfg=None, fragment_cfg=None) -> FragmentBuilder:
    with FragmentBuilder(k, filter_cfg or FilterConfig(), fragment_cfg or FragmentConfig(), registration_workers=2) as builder:
        for frame in frames:
            builder.process(frame.frame_id, frame_keypoints(frame, k), DepthRaster(frame.depth))
    return builder


def render_frames(scene, spec, seed=0):
    poses = camera_path(scene, spec, seed)
    dataset = SyntheticFrames(scene, spec, poses, seed)
    return [dataset[i] for i in range(len(dataset))], poses


# ── Fixtures ─────────────────────────────────────────────────────────────

@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def k():
    return Intrinsics(53.3, 53.3, 63.5, 63.5, 128, 128)


@pytest.fixture
def small_k():
    return Intrinsics(20.0, 20.0, 15.5, 11.5, 32, 24)


@pytest.fixture(scope='session')
def straight_scene():
    """Straight cylinder of radius 2.5 along +z."""
    cfg = SceneConfig(length=12.0, wiggle=0.0, bump_amplitude=0.0, landmark_density=2.0)
    return TubeScene.build(cfg, seed=0)


@pytest.fixture(scope='session')
def tube_scene():
    return TubeScene.build(SceneConfig(), seed=0)


@pytest.fixture(scope='session')
def clean_spec():
    return SequenceSpec(frames=40)


@pytest.fixture(scope='session')
def clean_frames(tube_scene, clean_spec):
    """(frames, gt poses) of a noiseless 40-frame pass, rendered in memory."""
    return render_frames(tube_scene, clean_spec, seed=0)


@pytest.fixture(scope='session')
def clean_builder(clean_frames, clean_spec):
    frames, _ = clean_frames
    return build_fragments(frames, clean_spec.intrinsics)


@pytest.fixture(scope='session')
def clean_sequence(tube_scene, clean_spec, tmp_path_factory):
    """Sequence directory of the same noiseless pass."""
    out = tmp_path_factory.mktemp('clean') / 'sequence'
    generate_sequence(tube_scene, clean_spec, out, seed=0)
    return out
