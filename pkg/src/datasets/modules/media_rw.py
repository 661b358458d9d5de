import os
import re
from pathlib import Path

import numpy as np

from src.geometry import Intrinsics
from src.utils.errors import InvalidInputError, MalformedSequenceError
from src.utils.misc import IoMisc

DESCRIPTOR_DIM = 128
FRAME_NAME = re.compile(r'^(\d{6})\.(rgb|depth|feat)$')
FRAME_SUFFIXES = ('rgb', 'depth', 'feat')


def frame_stem(frame_id) -> str:
    return f'{int(frame_id):06d}'


def frame_path(sequence_dir, frame_id, suffix):
    return Path(sequence_dir) / 'frames' / f'{frame_stem(frame_id)}.{suffix}'


def gt_depth_path(sequence_dir, frame_id):
    return Path(sequence_dir) / 'gt' / 'depth' / f'{frame_stem(frame_id)}.depth'


def read_intrinsics(sequence_dir) -> Intrinsics:
    """intrinsics.txt: one line `fx fy cx cy width height`."""
    path = Path(sequence_dir) / 'intrinsics.txt'
    if not path.is_file():
        raise MalformedSequenceError(path, 'missing file')
    lines = [line for line in path.read_text().splitlines() if line.strip()]
    if len(lines) != 1:
        raise MalformedSequenceError(path, f'expected one line, found {len(lines)}')
    try:
        return Intrinsics.from_line(lines[0])
    except (ValueError, InvalidInputError) as e:
        raise MalformedSequenceError(path, str(e)) from e


def write_intrinsics(sequence_dir, k: Intrinsics):
    with IoMisc.atomic_write(Path(sequence_dir) / 'intrinsics.txt') as f:
        f.write(k.to_line() + '\n')


def load_raster(filepath, height, width, channels=0) -> np.ndarray:
    """
    Little-endian float32 raster.
    return: np.ndarray float64, [H, W] if channels == 0 else [H, W, channels]
    """
    filepath = Path(filepath)
    if not filepath.is_file():
        raise MalformedSequenceError(filepath, 'missing file')
    data = np.fromfile(filepath, dtype='<f4')
    shape = (height, width) if channels == 0 else (height, width, channels)
    if data.size != int(np.prod(shape)):
        raise MalformedSequenceError(filepath, f'holds {data.size} floats, expected {int(np.prod(shape))} for shape {shape}')
    return data.reshape(shape).astype(np.float64)


def save_raster(filepath, array: np.ndarray):
    with IoMisc.atomic_write(filepath, 'wb') as f:
        f.write(np.ascontiguousarray(array, dtype='<f4').tobytes())


def load_features(filepath):
    """
    .feat: u32 count, then per keypoint 2 x f32 uv and 128 x f32 descriptor.
    return: uv [N, 2], descriptors [N, 128], both float64
    """
    filepath = Path(filepath)
    if not filepath.is_file():
        raise MalformedSequenceError(filepath, 'missing file')
    raw = filepath.read_bytes()
    if len(raw) < 4:
        raise MalformedSequenceError(filepath, 'truncated header')
    count = int(np.frombuffer(raw[:4], dtype='<u4')[0])
    body = np.frombuffer(raw[4:], dtype='<f4') if (len(raw) - 4) % 4 == 0 else None
    if body is None or body.size != count * (2 + DESCRIPTOR_DIM):
        raise MalformedSequenceError(filepath, f'payload does not hold {count} keypoints')
    table = body.reshape(count, 2 + DESCRIPTOR_DIM).astype(np.float64)
    if not np.all(np.isfinite(table)):
        raise MalformedSequenceError(filepath, 'non-finite values')
    return table[:, :2], table[:, 2:]


def save_features(filepath, uv, descriptors):
    uv = np.asarray(uv).reshape(-1, 2)
    descriptors = np.asarray(descriptors).reshape(len(uv), DESCRIPTOR_DIM)
    with IoMisc.atomic_write(filepath, 'wb') as f:
        f.write(np.array([len(uv)], dtype='<u4').tobytes())
        f.write(np.concatenate([uv, descriptors], axis=1).astype('<f4').tobytes())


def list_frame_ids(sequence_dir):
    """Frame ids present under frames/; each id needs all three files and ids run from 0 without gaps."""
    frames_dir = Path(sequence_dir) / 'frames'
    if not frames_dir.is_dir():
        raise MalformedSequenceError(frames_dir, 'missing directory')
    found = {}
    for name in sorted(os.listdir(frames_dir)):
        match = FRAME_NAME.match(name)
        if match is None:
            raise MalformedSequenceError(frames_dir / name, 'unexpected file name')
        found.setdefault(int(match.group(1)), set()).add(match.group(2))
    if not found:
        raise MalformedSequenceError(frames_dir / f'{frame_stem(0)}.rgb', 'missing file')
    for expected, frame_id in enumerate(sorted(found)):
        if frame_id != expected:
            raise MalformedSequenceError(frame_path(sequence_dir, expected, 'rgb'), 'missing file (frame ids must be contiguous from 0)')
        for suffix in FRAME_SUFFIXES:
            if suffix not in found[frame_id]:
                raise MalformedSequenceError(frame_path(sequence_dir, frame_id, suffix), 'missing file')
    return sorted(found)


def read_match_rows(filepath):
    """Rows `frame_a frame_b kp_a kp_b` as an int64 [M, 4] array."""
    filepath = Path(filepath)
    if not filepath.is_file():
        raise MalformedSequenceError(filepath, 'missing file')
    rows = []
    for line_no, line in enumerate(filepath.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 4 or not all(x.isdigit() for x in fields):
            raise MalformedSequenceError(filepath, f'line {line_no}: expected four non-negative integers')
        rows.append([int(x) for x in fields])
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def write_match_rows(filepath, rows):
    rows = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    with IoMisc.atomic_write(filepath) as f:
        for row in rows.tolist():
            f.write(' '.join(map(str, row)) + '\n')


def check_frame_files(sequence_dir, frame_id, k: Intrinsics):
    """Size checks of one frame's files against the intrinsics, without loading the payload."""
    expected = {
        'rgb': 4 * k.height * k.width * 3,
        'depth': 4 * k.height * k.width,
        }
    for suffix, size in expected.items():
        path = frame_path(sequence_dir, frame_id, suffix)
        actual = path.stat().st_size
        if actual != size:
            raise MalformedSequenceError(path, f'{actual} bytes, expected {size} for a {k.width}x{k.height} raster')
    path = frame_path(sequence_dir, frame_id, 'feat')
    actual = path.stat().st_size
    if actual < 4:
        raise MalformedSequenceError(path, 'truncated header')
    with open(path, 'rb') as f:
        count = int(np.frombuffer(f.read(4), dtype='<u4')[0])
    if actual != 4 + 4 * count * (2 + DESCRIPTOR_DIM):
        raise MalformedSequenceError(path, f'payload does not hold {count} keypoints')
