from pathlib import Path
from typing import Dict

import numpy as np

from src.geometry import RigidPose
from src.utils.errors import MalformedSequenceError
from src.utils.misc import IoMisc

__all__ = [
    'write_trajectory',
    'read_trajectory',
    'trajectory_positions',
    ]


def write_trajectory(path, poses: Dict[int, RigidPose]):
    """One line per frame, sorted by id: frame_id tx ty tz qx qy qz qw (cm, unit quaternion)."""
    with IoMisc.atomic_write(path) as f:
        for frame_id in sorted(poses):
            pose = poses[frame_id]
            values = ' '.join(f'{x:.9f}' for x in (*pose.translation, *pose.quaternion))
            f.write(f'{int(frame_id)} {values}\n')


def read_trajectory(path) -> Dict[int, RigidPose]:
    path = Path(path)
    if not path.is_file():
        raise MalformedSequenceError(path, 'missing trajectory file')
    poses = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith('#'):
            continue
        fields = line.split()
        if len(fields) != 8:
            raise MalformedSequenceError(path, f'line {line_no}: expected 8 fields, got {len(fields)}')
        try:
            frame_id = int(fields[0])
            values = np.array([float(x) for x in fields[1:]])
        except ValueError as e:
            raise MalformedSequenceError(path, f'line {line_no}: {e}') from e
        q = values[3:]
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-3:
            raise MalformedSequenceError(path, f'line {line_no}: quaternion is not unit length')
        if frame_id in poses:
            raise MalformedSequenceError(path, f'line {line_no}: duplicate frame {frame_id}')
        poses[frame_id] = RigidPose.from_quaternion(q / norm, values[:3])
    return poses


def trajectory_positions(poses: Dict[int, RigidPose]):
    """(ids, [N, 3] camera centers) in id order."""
    ids = sorted(poses)
    return ids, np.array([poses[i].translation for i in ids]).reshape(-1, 3)
