from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import measure

from src.utils.errors import DimensionMismatchError, EmptyVolumeError, InvalidInputError
from src.utils.misc import IoMisc

from .volume import TsdfVolume

__all__ = [
    'Mesh',
    'extract_mesh',
    'write_ply',
    'read_ply',
    ]


@dataclass(eq=False)
class Mesh:
    """vertices [N, 3] in cm, colors [N, 3] in [0, 1], faces [M, 3] vertex indices."""
    vertices: np.ndarray
    colors: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.colors) != len(self.vertices):
            raise DimensionMismatchError(f'{len(self.colors)} colors for {len(self.vertices)} vertices')
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise InvalidInputError('face index out of range')

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self):
        return len(self.faces) == 0

    def triangle_areas(self):
        a, b, c = (self.vertices[self.faces[:, n]] for n in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def edge_incidence(self):
        """Undirected edge -> number of incident triangles."""
        edges = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return Counter(map(tuple, edges.tolist()))

    def is_watertight(self):
        return not self.is_empty and all(n == 2 for n in self.edge_incidence().values())


def _observed_vertices(grid_verts, observed):
    """True where both voxels bracketing a vertex's grid edge are observed."""
    snapped = np.round(grid_verts)
    g = np.where(np.abs(grid_verts - snapped) < 1e-6, snapped, grid_verts)
    top = np.array(observed.shape) - 1
    lo = np.clip(np.floor(g).astype(np.int64), 0, top)
    hi = np.clip(np.ceil(g).astype(np.int64), 0, top)
    return observed[tuple(lo.T)] & observed[tuple(hi.T)]


def extract_mesh(vol: TsdfVolume) -> Mesh:
    """
    Marching cubes at the zero level. Unobserved voxels read tsdf 1, so every face with a
    vertex on a grid edge that touches one is dropped along with its orphaned vertices.
    Vertices sit at linear zero crossings in world cm; colors are trilinear in voxel rgb.
    """
    if vol.is_empty:
        raise EmptyVolumeError('volume has no allocated blocks')
    tsdf, weight, rgb, origin = vol.dense()
    observed = weight > 0
    values = tsdf[observed]
    if min(tsdf.shape) < 2 or values.size == 0 or values.min() >= 0.0 or values.max() <= 0.0:
        return Mesh.empty()

    spacing = (vol.voxel_size,) * 3
    try:
        verts, faces, _, _ = measure.marching_cubes(tsdf, level=0.0, spacing=spacing,
                                                    allow_degenerate=False, method='lewiner')
    except RuntimeError:
        return Mesh.empty()

    grid = verts / vol.voxel_size
    faces = faces[_observed_vertices(grid, observed)[faces].all(axis=1)]
    if len(faces) == 0:
        return Mesh.empty()
    used = np.unique(faces)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    faces, verts, grid = remap[faces], verts[used], grid[used]

    colors = np.stack([ndimage.map_coordinates(rgb[..., c], grid.T, order=1, mode='nearest') for c in range(3)], axis=-1)
    vertices = verts + origin * vol.voxel_size
    return Mesh(vertices, np.clip(colors, 0.0, 1.0), faces)


def write_ply(path, mesh: Mesh):
    """
    ASCII PLY: vertex x y z (float) red green blue (uchar), face vertex_indices
    (uchar count, int indices).
    """
    colors = np.rint(np.clip(mesh.colors, 0.0, 1.0) * 255).astype(np.int64)
    with IoMisc.atomic_write(path) as f:
        f.write('ply\nformat ascii 1.0\n')
        f.write(f'element vertex {len(mesh.vertices)}\n')
        f.write('property float x\nproperty float y\nproperty float z\n')
        f.write('property uchar red\nproperty uchar green\nproperty uchar blue\n')
        f.write(f'element face {len(mesh.faces)}\n')
        f.write('property list uchar int vertex_indices\n')
        f.write('end_header\n')
        for v, c in zip(mesh.vertices, colors):
            f.write(f'{v[0]:.6f} {v[1]:.6f} {v[2]:.6f} {c[0]} {c[1]} {c[2]}\n')
        for face in mesh.faces:
            f.write(f'3 {face[0]} {face[1]} {face[2]}\n')


def read_ply(path) -> Mesh:
    """Reader for the files write_ply produces."""
    with open(path) as f:
        lines = f.read().splitlines()
    header_end = lines.index('end_header')
    counts = {}
    for line in lines[:header_end]:
        parts = line.split()
        if parts[:1] == ['element']:
            counts[parts[1]] = int(parts[2])
    n_vertices, n_faces = counts.get('vertex', 0), counts.get('face', 0)
    body = lines[header_end + 1:]
    vertex_rows = np.array([row.split() for row in body[:n_vertices]], dtype=np.float64).reshape(-1, 6)
    face_rows = np.array([row.split() for row in body[n_vertices:n_vertices + n_faces]], dtype=np.int64).reshape(-1, 4)
    return Mesh(vertex_rows[:, :3], vertex_rows[:, 3:] / 255.0, face_rows[:, 1:])
